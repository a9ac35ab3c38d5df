//! Scalar abstraction for the pure math kernels.

/// Floating point scalar: `f32` or `f64`.
pub trait Real: num_traits::Float + num_traits::FromPrimitive + core::fmt::Debug + 'static {}

impl<T> Real for T where
    T: num_traits::Float + num_traits::FromPrimitive + core::fmt::Debug + 'static
{
}
