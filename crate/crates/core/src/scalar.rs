use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::Serialize;

/// Floating point type the statistics are computed in: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + FromStr + Sum + Default + Debug + Display + Serialize + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, used for constants and probabilities.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable in every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }

    /// Shortest text form that parses back to the same value.
    fn to_text(self) -> String;
}

impl Scalar for f32 {
    fn to_text(self) -> String {
        format_roundtrip(self.abs() as f64, || format!("{self}"), || format!("{self:e}"))
    }
}

impl Scalar for f64 {
    fn to_text(self) -> String {
        format_roundtrip(self.abs(), || format!("{self}"), || format!("{self:e}"))
    }
}

// `Display` never switches to exponent form, which gets unwieldy far from 1.
fn format_roundtrip(magnitude: f64, plain: impl FnOnce() -> String, exp: impl FnOnce() -> String) -> String {
    if magnitude != 0.0 && !(1e-5..1e16).contains(&magnitude) {
        exp()
    } else {
        plain()
    }
}
