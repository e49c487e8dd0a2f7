//! Scalar abstraction shared by the numeric modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar usable by the specificity tables, the scorer and the metrics.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + FromStr + Default + Sum + Send + Sync + 'static
{
    /// Name written into persisted model headers.
    const NAME: &'static str;

    /// Converts an `f64` constant. Never fails for the implemented types.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant representable")
    }

    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("count representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";
}
