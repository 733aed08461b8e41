//! Scalar abstraction for all numeric kernels.
//!
//! Everything downstream of the expression evaluator (jets, tensors,
//! curvature, solvers) is generic over [`Scalar`]. The trait marries the
//! `num-traits` float surface used by the jet recurrences with
//! `nalgebra::RealField`, which the dense solvers (inversion, SVD,
//! symmetric eigendecompositions) require. `f64` is the working type of the
//! CLI; `f32` exists to keep the kernels honest about genericity.

use std::fmt::{Debug, Display, LowerExp};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + nalgebra::RealField
    + Copy
    + Default
    + Debug
    + Display
    + LowerExp
{
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + nalgebra::RealField
        + Copy
        + Default
        + Debug
        + Display
        + LowerExp
{
}

/// Lossy conversion from `f64` literals into the scalar type.
///
/// `FromPrimitive::from_f64` cannot fail for the float types this crate
/// targets; the unwrap documents that expectation.
#[inline]
pub fn fl<S: Scalar>(x: f64) -> S {
    S::from_f64(x).expect("float literal must convert into the scalar type")
}

/// `usize` to scalar, for dimension-dependent coefficients.
#[inline]
pub fn fu<S: Scalar>(x: usize) -> S {
    S::from_usize(x).expect("usize must convert into the scalar type")
}

/// Scalar back to `f64`, for reports and serialization.
#[inline]
pub fn to_f<S: Scalar>(x: S) -> f64 {
    x.to_f64().expect("scalar must convert into f64")
}
