//! Numerically exact curvature analysis for closed-form Riemannian metrics.
//!
//! Metrics are given as symbolic expressions in the chart coordinates; all
//! derivatives come from truncated Taylor jets of those expressions, so the
//! computed curvature, identity residuals, and structure fits carry no
//! finite-difference error. The crate exposes:
//!
//! - [`exprlang`]: the expression language for metric entries;
//! - [`jets`]: dense multivariate derivative jets with exact arithmetic rules;
//! - [`geometry`]: the chart pipeline (metric → connection → curvature) and
//!   the one-parameter family of curvature-type tensors;
//! - [`identities`]: residuals for the identities the curvature must satisfy;
//! - [`classify`]: structure detection (Einstein/quasi-Einstein splits, the
//!   covariant recurrence solver, concircular fits, symmetry-type fits);
//! - [`builders`]: ready-made metric specs (flat, constant curvature, warped
//!   products, seeded perturbations, synthetic recurrence instances);
//! - [`manifest`] / [`runner`]: the JSON manifest format and deterministic
//!   run reports used by the `zsym` binary.
//!
//! Everything numeric is generic over [`scalar::Scalar`] (`f32`/`f64`); the
//! aliases below fix `f64` for the common case.

pub mod builders;
pub mod classify;
pub mod exprlang;
pub mod geometry;
pub mod identities;
pub mod jets;
pub mod manifest;
pub mod runner;
pub mod scalar;

/// Derivative jet over `f64`.
pub type Jet = jets::Jet<f64>;
/// Tensor of `f64` jets.
pub type TensorJet = geometry::tensor::TensorJet<f64>;
/// Tensor of plain `f64` values.
pub type TensorValue = geometry::tensor::TensorValue<f64>;
/// Fully evaluated chart geometry over `f64`.
pub type Geometry = geometry::GeometryAtPoint<f64>;
