//! Lossless decimal serialization of reals for the JSON file formats.
//!
//! Every `f64` written through [`Real`] carries 17 significant digits, so a
//! write/read cycle reproduces the exact bit pattern.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;

#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Default)]
pub struct Real(pub f64);

/// Decimal text for `x` with 17 significant digits.
pub fn format_real(x: f64) -> String {
    assert!(x.is_finite(), "non-finite real {x} cannot be serialized");
    if x == 0.0 {
        // keep the sign of -0.0 out of the files
        return "0.0000000000000000e0".to_string();
    }
    format!("{x:.16e}")
}

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let raw = RawValue::from_string(format_real(self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        f64::deserialize(d).map(Real)
    }
}

impl From<f64> for Real {
    fn from(x: f64) -> Self {
        Real(x)
    }
}

pub fn reals(xs: &[f64]) -> Vec<Real> {
    xs.iter().copied().map(Real).collect()
}

pub fn unreal(xs: &[Real]) -> Vec<f64> {
    xs.iter().map(|r| r.0).collect()
}
