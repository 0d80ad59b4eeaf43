//! Scalar abstraction for the numerical kernel.
//!
//! The geometry, potential, special-function, and Runge-Kutta layers are
//! generic over [`Real`] so they can be instantiated at `f32` or `f64`.
//! The higher layers (dynamics, variational, two-centre, symbolic) fix
//! `f64`: their public tolerances (1e-6 .. 1e-12) are not meaningful in
//! single precision.

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar usable throughout the kernel.
///
/// `of` converts an `f64` literal; every constant used by the kernel is
/// exactly representable or safely rounded in both supported widths.
pub trait Real: Float + FromPrimitive + core::fmt::Debug + core::fmt::Display + 'static {
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("constant not representable in this scalar type")
    }

    /// π for this scalar width.
    #[inline]
    fn pi() -> Self {
        Self::of(core::f64::consts::PI)
    }
}

impl Real for f32 {}
impl Real for f64 {}
