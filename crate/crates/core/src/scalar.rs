//! Scalar abstraction for the geometry and energy helpers.

use std::fmt::Debug;

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating-point type usable by the generic helpers (`f32` or `f64`).
pub trait Real: Float + FloatConst + FromPrimitive + Debug + Send + Sync + 'static {
    /// Converts an `f64` literal, panicking only if the target type cannot represent it.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in target float type")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Cartesian 3-vector in the global frame.
pub type Vec3<T> = [T; 3];

pub fn add<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale<T: Real>(a: Vec3<T>, s: T) -> Vec3<T> {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot<T: Real>(a: Vec3<T>, b: Vec3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm<T: Real>(a: Vec3<T>) -> T {
    dot(a, a).sqrt()
}

pub fn zero<T: Real>() -> Vec3<T> {
    [T::zero(); 3]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_helpers_agree_in_both_precisions() {
        let a = [3.0f64, 4.0, 12.0];
        assert_eq!(norm(a), 13.0);
        let b = [3.0f32, 4.0, 12.0];
        assert_eq!(norm(b), 13.0);
        assert_eq!(sub(add(a, a), a), a);
        assert_eq!(dot(scale(a, 2.0), [1.0, 0.0, 0.0]), 6.0);
    }
}
