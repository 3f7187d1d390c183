//! Shared report plumbing: fixed-precision JSON numbers and config digests.

use serde_json::{Number, Value};
use sha2::{Digest, Sha256};

/// A JSON number with 17 significant digits.
pub fn num(x: f64) -> Value {
    let text = fixed17(x);
    Value::Number(
        text.parse::<Number>()
            .expect("formatted float is valid JSON"),
    )
}

/// `x` with 17 significant digits in scientific notation.
pub fn fixed17(x: f64) -> String {
    format!("{x:.16e}")
}

/// `[re, im]` pair.
pub fn complex(z: num_complex::Complex64) -> Value {
    Value::Array(vec![num(z.re), num(z.im)])
}

/// SHA-256 hex digest of canonical configuration text.
pub fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}
