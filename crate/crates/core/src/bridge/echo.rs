//! Reference stub server for the bridge protocol.
//!
//! `infer` answers with the mean of `y_obs` for every candidate, unit
//! variance and zero gradients. Fault-injection switches exist so the client
//! can be tested against misbehaving servers.

use std::io::{BufRead, Write};

use super::protocol::{decode, encode, Request, Response, PROTOCOL_VERSION};

#[derive(Debug, Clone)]
pub struct EchoOptions {
    pub max_context_size: usize,
    pub grad_capable: bool,
    /// Answer the handshake with a non-JSON line.
    pub garbage: bool,
    /// Exit without answering when an `infer` request arrives.
    pub crash_on_infer: bool,
    /// Reply to every request with `id + 1`.
    pub wrong_id: bool,
    /// Reply to `infer` with `ok: false`.
    pub fail_infer: bool,
}

impl Default for EchoOptions {
    fn default() -> Self {
        Self {
            max_context_size: 10_000,
            grad_capable: true,
            garbage: false,
            crash_on_infer: false,
            wrong_id: false,
            fail_infer: false,
        }
    }
}

impl EchoOptions {
    /// Parses the stub's command-line switches.
    pub fn from_args<I: IntoIterator<Item = String>>(args: I) -> Result<Self, String> {
        let mut opts = Self::default();
        let mut it = args.into_iter();
        while let Some(a) = it.next() {
            match a.as_str() {
                "--garbage" => opts.garbage = true,
                "--crash-on-infer" => opts.crash_on_infer = true,
                "--wrong-id" => opts.wrong_id = true,
                "--fail-infer" => opts.fail_infer = true,
                "--no-grad" => opts.grad_capable = false,
                "--max-context" => {
                    let v = it.next().ok_or("--max-context needs a value")?;
                    opts.max_context_size = v.parse().map_err(|_| format!("bad --max-context {v}"))?;
                }
                other => return Err(format!("unknown option {other}")),
            }
        }
        Ok(opts)
    }
}

pub enum Outcome {
    Shutdown,
    Eof,
    Crashed,
}

fn answer(req: &Request, opts: &EchoOptions) -> Response {
    let id = req.id();
    match req {
        Request::Ping { .. } => Response {
            version: Some(PROTOCOL_VERSION.to_string()),
            max_context_size: Some(opts.max_context_size),
            grad_capable: Some(opts.grad_capable),
            ..Response::ok(id)
        },
        Request::Shutdown { .. } => Response::ok(id),
        Request::Echo { values, .. } => Response {
            values: Some(values.clone()),
            ..Response::ok(id)
        },
        Request::Infer {
            x_obs,
            y_obs,
            x_cand,
            need_grad,
            ..
        } => {
            if opts.fail_infer {
                return Response::err(id, "stub configured to fail");
            }
            if x_obs.len() != y_obs.len() {
                return Response::err(id, "x_obs and y_obs lengths differ");
            }
            if x_obs.len() + x_cand.len() > opts.max_context_size {
                return Response::err(
                    id,
                    format!("context {} exceeds cap {}", x_obs.len() + x_cand.len(), opts.max_context_size),
                );
            }
            let m = x_cand.len();
            let mu = if y_obs.is_empty() {
                0.0
            } else {
                y_obs.iter().sum::<f64>() / y_obs.len() as f64
            };
            let dim = x_cand.first().or(x_obs.first()).map_or(0, Vec::len);
            Response {
                mean: Some(vec![mu; m]),
                var: Some(vec![1.0; m]),
                grad: (*need_grad && opts.grad_capable).then(|| vec![vec![0.0; dim]; m]),
                ..Response::ok(id)
            }
        }
    }
}

/// Serves requests from `input` until `shutdown`, end of input, or an
/// injected crash.
pub fn serve<R: BufRead, W: Write>(input: R, mut output: W, opts: &EchoOptions) -> std::io::Result<Outcome> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let req: Request = match decode(&line) {
            Ok(r) => r,
            Err(e) => {
                let resp = Response::err(0, format!("malformed request: {e}"));
                writeln!(output, "{}", encode(&resp)?)?;
                output.flush()?;
                continue;
            }
        };
        if matches!(req, Request::Infer { .. }) && opts.crash_on_infer {
            return Ok(Outcome::Crashed);
        }
        if matches!(req, Request::Ping { .. }) && opts.garbage {
            writeln!(output, "this is not json")?;
            output.flush()?;
            continue;
        }
        let mut resp = answer(&req, opts);
        if opts.wrong_id {
            resp.id = resp.id.wrapping_add(1);
        }
        writeln!(output, "{}", encode(&resp)?)?;
        output.flush()?;
        if matches!(req, Request::Shutdown { .. }) {
            return Ok(Outcome::Shutdown);
        }
    }
    Ok(Outcome::Eof)
}

/// Entry point shared by the stub binary and the CLI `serve-echo` command.
pub fn serve_stdio(opts: &EchoOptions) -> std::io::Result<Outcome> {
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    serve(stdin.lock(), stdout.lock(), opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(lines: &[&str], opts: &EchoOptions) -> Vec<Response> {
        let input = lines.join("\n");
        let mut out = Vec::new();
        serve(input.as_bytes(), &mut out, opts).unwrap();
        String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| decode(l).unwrap())
            .collect()
    }

    #[test]
    fn ping_infer_shutdown() {
        let r = run(
            &[
                r#"{"op":"ping","id":1}"#,
                r#"{"op":"infer","id":2,"x_obs":[[0.1],[0.2]],"y_obs":[1.0,3.0],"x_cand":[[0.5]],"need_grad":true}"#,
                r#"{"op":"shutdown","id":3}"#,
                r#"{"op":"ping","id":4}"#,
            ],
            &EchoOptions::default(),
        );
        assert_eq!(r.len(), 3);
        assert_eq!(r[0].version.as_deref(), Some("1"));
        assert_eq!(r[0].max_context_size, Some(10_000));
        assert_eq!(r[1].mean, Some(vec![2.0]));
        assert_eq!(r[1].grad, Some(vec![vec![0.0]]));
        assert!(r[2].ok);
    }

    #[test]
    fn malformed_request_gets_error() {
        let r = run(&["{not json"], &EchoOptions::default());
        assert!(!r[0].ok);
    }

    #[test]
    fn parses_switches() {
        let o = EchoOptions::from_args(["--no-grad", "--max-context", "50"].map(String::from)).unwrap();
        assert!(!o.grad_capable);
        assert_eq!(o.max_context_size, 50);
        assert!(EchoOptions::from_args(["--bogus".to_string()]).is_err());
    }
}
