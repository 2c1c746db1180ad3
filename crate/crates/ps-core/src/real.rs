use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar the whole toolkit is generic over.
///
/// f64 is used for oracle tests and determinism-critical runs, f32 for
/// training throughput; the choice is made once at the CLI boundary.
pub trait Real:
    Float + FromPrimitive + NumAssign + Debug + Display + Default + Send + Sync + 'static
{
    const NAME: &'static str;

    /// Infallible conversion from a finite f64 (rounds for f32).
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 conversion")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("real scalar fits in f64")
    }
}

impl Real for f32 {
    const NAME: &'static str = "f32";
}

impl Real for f64 {
    const NAME: &'static str = "f64";
}
