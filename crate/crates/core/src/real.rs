//! Scalar abstraction: every geometric and probabilistic routine in this
//! crate is generic over [`Real`], implemented for `f32` and `f64`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{de::DeserializeOwned, Serialize};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar used throughout the crate.
///
/// Extends `num_traits::Float` with conversions from/to `f64` for constants
/// and reporting, plus seeded random draws so noise models stay generic.
pub trait Real:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + num_traits::NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant into this scalar type.
    fn real(v: f64) -> Self {
        Self::from_f64(v).expect("constant must be representable")
    }

    /// Widens to `f64` for reporting and serialization.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar must be representable as f64")
    }

    /// Draws one standard-normal sample.
    fn randn<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Draws one uniform sample from `[0, 1)`.
    fn rand01<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

impl Real for f32 {
    fn randn<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn rand01<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.random()
    }
}

impl Real for f64 {
    fn randn<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn rand01<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.random()
    }
}
