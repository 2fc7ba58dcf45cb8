//! Scalar abstractions shared by every module.
//!
//! Continuous physics (dynamics, gate integrals, readout, chain) is written
//! against [`Real`], implemented for `f32` and `f64`. Frequency bookkeeping
//! only needs field arithmetic and ordering, so it is written against the
//! weaker [`Scalar`] bound, which also admits the exact rational type
//! [`Exact`] used to check beat-note equations to the hertz.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_rational::Ratio;
use num_traits::{Float, FloatConst, FromPrimitive, Num, Signed, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Exact rational numbers, used for integer-hertz frequency plans.
pub type Exact = Ratio<i64>;

/// Ordered field arithmetic with lossless conversion from small literals.
pub trait Scalar:
    Num + Signed + Copy + PartialOrd + Debug + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics if the value cannot be represented.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).unwrap_or_else(|| panic!("literal {x} not representable"))
    }

    fn from_int(k: i64) -> Self {
        Self::from_i64(k).unwrap_or_else(|| panic!("integer {k} not representable"))
    }

    fn approx(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
impl Scalar for Exact {}

/// Floating-point scalar used by all continuous computations.
pub trait Real: Scalar + Float + FloatConst + Display + Default + Sum {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Clamps into `[0, 1]`.
    fn unit_clamp(self) -> Self {
        self.max(Self::zero()).min(Self::one())
    }
}

impl Real for f32 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

impl Real for f64 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

/// `sin(x)/x` with the removable singularity filled in.
pub fn sinc<T: Real>(x: T) -> T {
    if x.abs() < T::lit(1e-4) {
        let x2 = x * x;
        T::one() - x2 / T::lit(6.0) + x2 * x2 / T::lit(120.0)
    } else {
        x.sin() / x
    }
}
