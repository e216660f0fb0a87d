//! Scalar abstraction for the linear algebra and channel code.

use std::fmt::{Debug, Display, LowerExp};

use num_traits::{Float, FloatConst, FromPrimitive};

/// Real floating-point scalar: `f32` or `f64`.
///
/// Tolerances are per precision; the `f64` values are the ones the public
/// invariants are stated in.
pub trait Real:
    Float + FloatConst + FromPrimitive + Debug + Display + LowerExp + Default + Send + Sync + 'static
{
    /// Elementwise Hermiticity and unit-trace slack.
    fn algebra_tol() -> Self;
    /// Slack allowed below zero for the smallest eigenvalue of a PSD matrix.
    fn psd_tol() -> Self;
    /// Amplitude normalization slack for user-supplied state vectors.
    fn norm_tol() -> Self;
    /// Trace slack separating trace-preserving from non-trace-preserving chi.
    fn tp_tol() -> Self;

    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable")
    }
}

impl Real for f64 {
    fn algebra_tol() -> Self {
        1e-12
    }
    fn psd_tol() -> Self {
        1e-10
    }
    fn norm_tol() -> Self {
        1e-9
    }
    fn tp_tol() -> Self {
        1e-6
    }
}

impl Real for f32 {
    fn algebra_tol() -> Self {
        1e-5
    }
    fn psd_tol() -> Self {
        1e-5
    }
    fn norm_tol() -> Self {
        1e-5
    }
    fn tp_tol() -> Self {
        1e-4
    }
}
