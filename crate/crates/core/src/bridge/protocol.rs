//! Wire messages of the bridge protocol: one JSON object per line, floats
//! written with 17 significant digits so they decode bit-exactly.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;

pub const PROTOCOL_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    Ping {
        id: u64,
    },
    Infer {
        id: u64,
        x_obs: Vec<Vec<f64>>,
        y_obs: Vec<f64>,
        x_cand: Vec<Vec<f64>>,
        need_grad: bool,
    },
    Shutdown {
        id: u64,
    },
    /// Diagnostic op served by the echo stub: returns `values` unchanged.
    Echo {
        id: u64,
        values: Vec<f64>,
    },
}

impl Request {
    pub fn id(&self) -> u64 {
        match self {
            Request::Ping { id }
            | Request::Infer { id, .. }
            | Request::Shutdown { id }
            | Request::Echo { id, .. } => *id,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: u64,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_context_size: Option<usize>,
    /// Ping only: whether the server can return mean gradients.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_capable: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub var: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl Response {
    pub fn ok(id: u64) -> Self {
        Self {
            id,
            ok: true,
            ..Self::default()
        }
    }

    pub fn err(id: u64, msg: impl Into<String>) -> Self {
        Self {
            id,
            ok: false,
            error: Some(msg.into()),
            ..Self::default()
        }
    }
}

/// JSON formatter writing every float as `d.dddddddddddddddde±x`.
#[derive(Debug, Clone, Copy, Default)]
pub struct FullPrecision;

impl Formatter for FullPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// Serializes `msg` as a single line (without the trailing newline).
/// Non-finite floats are rejected since JSON cannot carry them.
pub fn encode<T: Serialize>(msg: &T) -> io::Result<String> {
    let value = serde_json::to_value(msg).map_err(io::Error::other)?;
    if !all_finite(&value) {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            "non-finite float in message",
        ));
    }
    let mut buf = Vec::with_capacity(256);
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision);
    msg.serialize(&mut ser).map_err(io::Error::other)?;
    String::from_utf8(buf).map_err(io::Error::other)
}

fn all_finite(v: &serde_json::Value) -> bool {
    match v {
        // serde_json turns NaN/inf into null; any null inside a numeric
        // payload therefore signals a non-finite input.
        serde_json::Value::Null => false,
        serde_json::Value::Array(a) => a.iter().all(all_finite),
        serde_json::Value::Object(o) => o.values().all(all_finite),
        _ => true,
    }
}

pub fn decode<'a, T: Deserialize<'a>>(line: &'a str) -> serde_json::Result<T> {
    serde_json::from_str(line)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn floats_use_seventeen_digits() {
        let line = encode(&Request::Echo {
            id: 3,
            values: vec![0.1, -2.5e-300, 1.0],
        })
        .unwrap();
        assert!(line.contains("1.0000000000000001e-1"), "{line}");
        assert!(line.contains("-2.5000000000000000e-300"), "{line}");
        assert!(!line.contains('\n'));
    }

    #[test]
    fn non_finite_rejected() {
        assert!(encode(&Request::Echo {
            id: 1,
            values: vec![f64::NAN]
        })
        .is_err());
    }

    #[test]
    fn request_shape() {
        let line = encode(&Request::Ping { id: 7 }).unwrap();
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["op"], "ping");
        assert_eq!(v["id"], 7);
    }

    proptest! {
        #[test]
        fn float_roundtrip_is_bit_exact(bits in prop::collection::vec(any::<u64>(), 0..32)) {
            let values: Vec<f64> = bits.iter().map(|b| f64::from_bits(*b)).filter(|v| v.is_finite()).collect();
            let line = encode(&Request::Echo { id: 1, values: values.clone() }).unwrap();
            let back: Request = decode(&line).unwrap();
            let Request::Echo { values: got, .. } = back else { panic!("wrong variant") };
            prop_assert_eq!(got.len(), values.len());
            for (a, b) in got.iter().zip(&values) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
