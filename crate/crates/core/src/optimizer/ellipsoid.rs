//! Ellipsoid `{x : (x - c)^T P^-1 (x - c) <= 1}` with deep-cut updates.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EllipsoidError {
    #[error("cut depth {alpha} leaves nothing of the ellipsoid")]
    Empty { alpha: f64 },
    #[error("cut direction is zero")]
    ZeroDirection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    center: DVector<f64>,
    shape: DMatrix<f64>,
}

impl Ellipsoid {
    /// Axis-aligned ellipsoid with the given semi-axes.
    pub fn axis_aligned(center: Vec<f64>, radii: &[f64]) -> Self {
        assert_eq!(center.len(), radii.len());
        let shape = DMatrix::from_diagonal(&DVector::from_iterator(
            radii.len(),
            radii.iter().map(|r| r * r),
        ));
        Self {
            center: DVector::from_vec(center),
            shape,
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    /// `sqrt(a^T P a)`: half the extent of the ellipsoid along `a`. For a
    /// concave function with supergradient `a` at the center this bounds how
    /// far its maximum over the ellipsoid lies above the center value.
    pub fn width(&self, a: &DVector<f64>) -> f64 {
        a.dot(&(&self.shape * a)).max(0.0).sqrt()
    }

    /// Keeps `{x : a^T (x - c) <= -depth}` (`depth >= 0` gives a deep cut).
    pub fn cut(&mut self, a: &DVector<f64>, depth: f64) -> Result<(), EllipsoidError> {
        let width = self.width(a);
        if width <= 0.0 {
            return Err(EllipsoidError::ZeroDirection);
        }
        let alpha = depth / width;
        if alpha >= 1.0 {
            return Err(EllipsoidError::Empty { alpha });
        }
        let n = self.dim() as f64;
        // Shallower than a central cut would not shrink the set.
        let alpha = alpha.max(if self.dim() == 1 { -1.0 } else { 0.0 });
        let b = &self.shape * a / width;
        if self.dim() == 1 {
            // Interval [c - r, c + r] intersected with the half-line.
            self.center -= &b * (0.5 * (1.0 + alpha));
            self.shape *= 0.25 * (1.0 - alpha) * (1.0 - alpha);
            return Ok(());
        }
        self.center -= &b * ((1.0 + n * alpha) / (n + 1.0));
        let scale = n * n * (1.0 - alpha * alpha) / (n * n - 1.0);
        let rank1 = &b * b.transpose() * (2.0 * (1.0 + n * alpha) / ((n + 1.0) * (1.0 + alpha)));
        self.shape = (&self.shape - rank1) * scale;
        self.shape = (&self.shape + self.shape.transpose()) * 0.5;
        Ok(())
    }

    /// Row-major copy of the shape matrix.
    pub fn shape_rows(&self) -> Vec<f64> {
        self.shape.transpose().as_slice().to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_cuts_are_exact() {
        let mut e = Ellipsoid::axis_aligned(vec![0.0], &[1.0]);
        e.cut(&DVector::from_vec(vec![1.0]), 0.5).unwrap();
        // keeps [-1, -0.5]
        assert!((e.center()[0] + 0.75).abs() < 1e-15);
        assert!((e.shape()[(0, 0)] - 0.0625).abs() < 1e-15);
        e.cut(&DVector::from_vec(vec![-2.0]), 0.0).unwrap();
        assert!((e.center()[0] + 0.625).abs() < 1e-15);
    }

    #[test]
    fn central_cut_volume_shrinks() {
        let mut e = Ellipsoid::axis_aligned(vec![0.0; 3], &[1.0, 2.0, 3.0]);
        let before = e.shape().determinant();
        e.cut(&DVector::from_vec(vec![1.0, -1.0, 0.5]), 0.0)
            .unwrap();
        assert!(e.shape().determinant() < before);
        assert!(e.shape().clone().cholesky().is_some());
    }

    #[test]
    fn retained_point_stays_inside() {
        let mut e = Ellipsoid::axis_aligned(vec![0.0, 0.0], &[1.0, 1.0]);
        let x = DVector::from_vec(vec![-0.6, 0.3]);
        e.cut(&DVector::from_vec(vec![1.0, 0.0]), 0.2).unwrap();
        let d = &x - e.center();
        let inv = e.shape().clone().try_inverse().unwrap();
        assert!(d.dot(&(inv * &d)) <= 1.0);
    }

    #[test]
    fn too_deep_cut_is_empty() {
        let mut e = Ellipsoid::axis_aligned(vec![0.0, 0.0], &[1.0, 1.0]);
        assert!(matches!(
            e.cut(&DVector::from_vec(vec![1.0, 0.0]), 1.5),
            Err(EllipsoidError::Empty { .. })
        ));
    }
}
