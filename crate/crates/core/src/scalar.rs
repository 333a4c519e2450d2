//! Floating point abstraction used by the conversion and statistics code.
//!
//! Calibration math and summary statistics are written once against
//! [`Scalar`] and instantiated for `f32` (on-device style arithmetic) and
//! `f64` (the service and the reference pipeline).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// f32 or f64.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Minimum, mean and maximum of a non-empty sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats<F> {
    pub min: F,
    pub mean: F,
    pub max: F,
    pub count: usize,
}

impl<F: Scalar> Stats<F> {
    /// Returns `None` for an empty input.
    pub fn of<I>(values: I) -> Option<Self>
    where
        I: IntoIterator<Item = F>,
    {
        let mut count = 0usize;
        let mut sum = F::zero();
        let mut min = F::infinity();
        let mut max = F::neg_infinity();
        for v in values {
            count += 1;
            sum = sum + v;
            min = min.min(v);
            max = max.max(v);
        }
        if count == 0 {
            return None;
        }
        let mean = sum / F::from_usize(count)?;
        // Rounding in the division can leave the mean an ulp outside [min, max].
        Some(Stats {
            min,
            mean: mean.max(min).min(max),
            max,
            count,
        })
    }
}
