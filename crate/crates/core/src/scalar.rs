//! Numeric traits the abstraction and reward code is generic over.
//!
//! [`Scalar`] covers anything that behaves like an ordered field for the
//! operations the tensor reducers and reward formulas need. `f32`, `f64`
//! and [`num_rational::Rational64`] all qualify, which lets the mass
//! conservation properties be checked exactly.
//!
//! [`Real`] adds the transcendental pieces (square roots, angles) that the
//! geometry and distance-decay code requires.

use std::fmt::Debug;

use num_traits::{Float, FloatConst, FromPrimitive, Num, NumCast, Signed};

pub trait Scalar:
    Copy + Num + Signed + PartialOrd + FromPrimitive + Debug + Send + Sync + 'static
{
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar")
    }

    /// Lossy conversion used only for values the engine produces as
    /// integral or small dyadic quantities.
    fn from_real(v: f64) -> Self {
        Self::from_f64(v).expect("value representable in scalar")
    }

    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn clamp_to(self, lo: Self, hi: Self) -> Self {
        self.max_of(lo).min_of(hi)
    }
}

impl<T> Scalar for T where
    T: Copy + Num + Signed + PartialOrd + FromPrimitive + Debug + Send + Sync + 'static
{
}

pub trait Real: Scalar + Float + FloatConst + NumCast {}

impl<T> Real for T where T: Scalar + Float + FloatConst + NumCast {}
