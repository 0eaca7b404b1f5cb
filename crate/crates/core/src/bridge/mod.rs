//! Client for external in-context surrogates served over a child-process
//! pipe. See `docs/protocol.md` for the wire format.

pub mod echo;
pub mod protocol;

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::domain::{ObservationSet, PosteriorBatch};
use crate::surrogate::{Capabilities, Surrogate};
use protocol::{decode, encode, Request, Response};

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("failed to launch surrogate server: {0}")]
    Spawn(#[source] std::io::Error),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("server error: {0}")]
    Remote(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("bridge handle has been shut down")]
    InvalidHandle,
}

#[derive(Debug, Clone, Copy)]
pub struct Timeouts {
    pub handshake: Duration,
    pub infer: Duration,
    pub shutdown: Duration,
}

impl Default for Timeouts {
    fn default() -> Self {
        Self {
            handshake: Duration::from_secs(30),
            infer: Duration::from_secs(600),
            shutdown: Duration::from_secs(5),
        }
    }
}

/// A live connection to one surrogate server process.
pub struct BridgeHandle {
    child: Option<Child>,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    version: String,
    max_context_size: usize,
    grad_capable: bool,
    next_id: u64,
    timeouts: Timeouts,
}

impl std::fmt::Debug for BridgeHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BridgeHandle")
            .field("version", &self.version)
            .field("max_context_size", &self.max_context_size)
            .field("live", &self.child.is_some())
            .finish()
    }
}

impl BridgeHandle {
    pub fn spawn(command: &[String]) -> Result<Self, BridgeError> {
        Self::spawn_with(command, Timeouts::default())
    }

    pub fn spawn_with(command: &[String], timeouts: Timeouts) -> Result<Self, BridgeError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| BridgeError::Spawn(std::io::Error::other("empty command")))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(BridgeError::Spawn)?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let mut handle = Self {
            child: Some(child),
            stdin,
            lines: rx,
            version: String::new(),
            max_context_size: 0,
            grad_capable: false,
            next_id: 1,
            timeouts,
        };
        let resp = match handle.roundtrip(|id| Request::Ping { id }, timeouts.handshake) {
            Ok(r) => r,
            Err(e) => {
                handle.kill();
                return Err(e);
            }
        };
        match (resp.version, resp.max_context_size) {
            (Some(v), Some(cap)) => {
                handle.version = v;
                handle.max_context_size = cap;
                handle.grad_capable = resp.grad_capable.unwrap_or(false);
                Ok(handle)
            }
            _ => {
                handle.kill();
                Err(BridgeError::Protocol(
                    "handshake response lacks version or max_context_size".into(),
                ))
            }
        }
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn max_context_size(&self) -> usize {
        self.max_context_size
    }

    pub fn grad_capable(&self) -> bool {
        self.grad_capable
    }

    pub fn is_live(&self) -> bool {
        self.child.is_some()
    }

    fn roundtrip(&mut self, make: impl FnOnce(u64) -> Request, timeout: Duration) -> Result<Response, BridgeError> {
        let stdin = self.stdin.as_mut().ok_or(BridgeError::InvalidHandle)?;
        let id = self.next_id;
        self.next_id += 1;
        let line = encode(&make(id)).map_err(|e| BridgeError::Precondition(e.to_string()))?;
        stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.write_all(b"\n"))
            .and_then(|_| stdin.flush())
            .map_err(|e| BridgeError::Protocol(format!("write failed (broken pipe?): {e}")))?;

        let line = match self.lines.recv_timeout(timeout) {
            Ok(Ok(l)) => l,
            Ok(Err(e)) => return Err(BridgeError::Protocol(format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                return Err(BridgeError::Protocol(format!(
                    "no response within {:.1} s",
                    timeout.as_secs_f64()
                )))
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(BridgeError::Protocol(
                    "server closed its output (broken pipe)".into(),
                ))
            }
        };
        let resp: Response =
            decode(&line).map_err(|e| BridgeError::Protocol(format!("malformed response line: {e}")))?;
        if resp.id != id {
            return Err(BridgeError::Protocol(format!(
                "response id {} does not match request id {id}",
                resp.id
            )));
        }
        if !resp.ok {
            return Err(BridgeError::Remote(
                resp.error.unwrap_or_else(|| "unspecified server error".into()),
            ));
        }
        Ok(resp)
    }

    /// One in-context inference. Fails before sending anything when the
    /// context plus candidates would exceed the server's cap.
    pub fn infer(&mut self, obs: &ObservationSet, x_cand: &DMatrix<f64>, need_grad: bool) -> Result<PosteriorBatch, BridgeError> {
        if self.stdin.is_none() {
            return Err(BridgeError::InvalidHandle);
        }
        let (n, m) = (obs.len(), x_cand.nrows());
        if n + m > self.max_context_size {
            return Err(BridgeError::Precondition(format!(
                "context {n} + candidates {m} exceeds max_context_size {}",
                self.max_context_size
            )));
        }
        if m > 0 && x_cand.ncols() != obs.dim() {
            return Err(BridgeError::Precondition(format!(
                "candidate dimension {} differs from observation dimension {}",
                x_cand.ncols(),
                obs.dim()
            )));
        }
        let want_grad = need_grad && self.grad_capable;
        let rows = |x: &DMatrix<f64>| -> Vec<Vec<f64>> { x.row_iter().map(|r| r.iter().copied().collect()).collect() };
        let (x_obs, cand) = (rows(obs.x()), rows(x_cand));
        let timeout = self.timeouts.infer;
        let resp = self.roundtrip(
            |id| Request::Infer {
                id,
                x_obs,
                y_obs: obs.y().to_vec(),
                x_cand: cand,
                need_grad: want_grad,
            },
            timeout,
        )?;
        let (Some(mean), Some(var)) = (resp.mean, resp.var) else {
            return Err(BridgeError::Protocol("infer response lacks mean or var".into()));
        };
        if mean.len() != m || var.len() != m {
            return Err(BridgeError::Protocol(format!(
                "expected {m} predictions, got mean {} / var {}",
                mean.len(),
                var.len()
            )));
        }
        let grad = match (want_grad, resp.grad) {
            (true, Some(g)) => {
                if g.len() != m || g.iter().any(|r| r.len() != obs.dim()) {
                    return Err(BridgeError::Protocol("gradient shape mismatch".into()));
                }
                Some(DMatrix::from_fn(m, obs.dim(), |i, j| g[i][j]))
            }
            (true, None) => return Err(BridgeError::Protocol("requested gradient missing".into())),
            (false, _) => None,
        };
        PosteriorBatch::new(mean, var, grad).map_err(|e| BridgeError::Protocol(e.to_string()))
    }

    /// Sends `values` through the stub's `echo` op.
    pub fn echo(&mut self, values: &[f64]) -> Result<Vec<f64>, BridgeError> {
        let timeout = self.timeouts.infer;
        let values = values.to_vec();
        let resp = self.roundtrip(|id| Request::Echo { id, values }, timeout)?;
        resp.values
            .ok_or_else(|| BridgeError::Protocol("echo response lacks values".into()))
    }

    /// Asks the server to exit, then reaps it (force-killing after the
    /// shutdown timeout). Calling it again is a no-op.
    pub fn shutdown(&mut self) {
        if self.child.is_none() {
            return;
        }
        let timeout = self.timeouts.shutdown;
        let _ = self.roundtrip(|id| Request::Shutdown { id }, timeout);
        self.stdin = None;
        if let Some(mut child) = self.child.take() {
            let deadline = Instant::now() + timeout;
            loop {
                match child.try_wait() {
                    Ok(Some(_)) => break,
                    Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(10)),
                    _ => {
                        let _ = child.kill();
                        let _ = child.wait();
                        break;
                    }
                }
            }
        }
    }

    fn kill(&mut self) {
        self.stdin = None;
        if let Some(mut child) = self.child.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl Drop for BridgeHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// [`Surrogate`] backed by a bridge server. Fitting only records the context.
pub struct BridgeSurrogate {
    handle: BridgeHandle,
    obs: Option<ObservationSet>,
    command: Vec<String>,
}

impl BridgeSurrogate {
    pub fn spawn(command: &[String]) -> Result<Self, BridgeError> {
        Ok(Self {
            handle: BridgeHandle::spawn(command)?,
            obs: None,
            command: command.to_vec(),
        })
    }

    pub fn handle(&mut self) -> &mut BridgeHandle {
        &mut self.handle
    }
}

impl Surrogate for BridgeSurrogate {
    fn identity(&self) -> String {
        format!("bridge:{}", self.command.join(" "))
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            analytic_grad: self.handle.grad_capable(),
            max_context_size: Some(self.handle.max_context_size()),
        }
    }

    fn fit(&mut self, obs: &ObservationSet, _seed: u64) -> crate::error::Result<()> {
        if !self.handle.is_live() {
            return Err(BridgeError::InvalidHandle.into());
        }
        self.obs = Some(obs.clone());
        Ok(())
    }

    fn context_len(&self) -> usize {
        self.obs.as_ref().map_or(0, ObservationSet::len)
    }

    fn predict(&mut self, x: &DMatrix<f64>, need_grad: bool) -> crate::error::Result<PosteriorBatch> {
        let obs = self
            .obs
            .as_ref()
            .ok_or_else(|| crate::error::Error::InvalidArgument("surrogate used before fit".into()))?;
        Ok(self.handle.infer(obs, x, need_grad)?)
    }
}
