use nalgebra::{DMatrix, DVector, Vector2};

use super::ObservationModel;
use crate::error::{invalid, Result};
use crate::particles::{Observation, StateVector};
use crate::rng::RngStream;

/// Static range-bearing scanner observing a point target.
///
/// The reading `z = (range, bearing)` is converted to a point in the world
/// frame and the likelihood is Gaussian in the Euclidean distance between that
/// point and the particle position. Works on any state whose first two
/// components are the planar position.
#[derive(Clone, Debug)]
pub struct ScannerModel {
    origin: Vector2<f64>,
    sigma: f64,
    state_dim: usize,
}

impl ScannerModel {
    pub fn new(origin: Vector2<f64>, sigma: f64, state_dim: usize) -> Result<Self> {
        if !(sigma > 0.0) || state_dim < 2 {
            return Err(invalid("scanner needs sigma > 0 and a state with a planar position"));
        }
        Ok(Self {
            origin,
            sigma,
            state_dim,
        })
    }

    pub fn origin(&self) -> Vector2<f64> {
        self.origin
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// World point implied by a reading.
    pub fn reading_point(&self, z: &Observation) -> Vector2<f64> {
        self.origin + z[0] * Vector2::new(z[1].cos(), z[1].sin())
    }

    /// Noise-free reading of a target at `p`.
    pub fn reading(&self, p: Vector2<f64>) -> Observation {
        let d = p - self.origin;
        DVector::from_vec(vec![d.norm(), d.y.atan2(d.x)])
    }

    /// Reading of the target at `p` with isotropic position noise of std `sigma`.
    pub fn sample_reading(&self, p: Vector2<f64>, rng: &mut RngStream) -> Observation {
        let noisy = p + Vector2::new(rng.normal(0.0, self.sigma), rng.normal(0.0, self.sigma));
        self.reading(noisy)
    }
}

impl ObservationModel for ScannerModel {
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn log_likelihood(&self, x: &StateVector, z: &Observation) -> f64 {
        let r = Vector2::new(x[0], x[1]) - self.reading_point(z);
        -r.norm_squared() / (2.0 * self.sigma * self.sigma)
    }

    fn score(&self, x: &StateVector, z: &Observation) -> StateVector {
        let r = Vector2::new(x[0], x[1]) - self.reading_point(z);
        let mut g = DVector::zeros(self.state_dim);
        let s2 = self.sigma * self.sigma;
        g[0] = -r.x / s2;
        g[1] = -r.y / s2;
        g
    }

    fn curvature(&self, _x: &StateVector, _z: &Observation) -> Option<DMatrix<f64>> {
        let mut c = DMatrix::zeros(self.state_dim, self.state_dim);
        let inv = 1.0 / (self.sigma * self.sigma);
        c[(0, 0)] = inv;
        c[(1, 1)] = inv;
        Some(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn reading_round_trip() {
        let s = ScannerModel::new(Vector2::new(1.0, -2.0), 0.1, 4).unwrap();
        let p = Vector2::new(4.0, 2.0);
        let z = s.reading(p);
        assert!((s.reading_point(&z) - p).norm() < 1e-12);
        let x = dvector![4.0, 2.0, 0.3, 0.1];
        assert!(s.log_likelihood(&x, &z).abs() < 1e-20);
    }
}
