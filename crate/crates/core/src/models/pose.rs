use nalgebra::DMatrix;

use super::{wrap_angle, GaussianNoise, TransitionModel};
use crate::error::{invalid, Result};
use crate::particles::{ControlInput, StateVector};
use crate::rng::RngStream;

/// Planar pose `(px, py, theta)` driven by odometry `u = (forward, turn)`.
///
/// The robot first translates along its heading, then turns. Noise is added
/// in the world frame; `theta` is wrapped to `(-pi, pi]` after every step.
#[derive(Clone, Debug)]
pub struct PlanarPoseModel {
    noise: GaussianNoise,
    angular: [usize; 1],
}

impl PlanarPoseModel {
    pub fn new(sigma_xy: f64, sigma_theta: f64) -> Result<Self> {
        if !(sigma_xy >= 0.0 && sigma_theta >= 0.0) {
            return Err(invalid("pose noise std must be >= 0"));
        }
        let cov = DMatrix::from_diagonal(&nalgebra::dvector![
            sigma_xy * sigma_xy,
            sigma_xy * sigma_xy,
            sigma_theta * sigma_theta
        ]);
        Ok(Self {
            noise: GaussianNoise::new(cov)?,
            angular: [2],
        })
    }
}

impl TransitionModel for PlanarPoseModel {
    fn state_dim(&self) -> usize {
        3
    }

    fn propagate_deterministic(&self, x: &StateVector, u: &ControlInput) -> StateVector {
        let mut next = x.clone();
        if u.len() == 2 {
            next[0] += u[0] * x[2].cos();
            next[1] += u[0] * x[2].sin();
            next[2] += u[1];
        }
        next[2] = wrap_angle(next[2]);
        next
    }

    fn propagate(&self, x: &StateVector, u: &ControlInput, rng: &mut RngStream) -> StateVector {
        let mut next = self.propagate_deterministic(x, u) + self.noise.sample(rng);
        next[2] = wrap_angle(next[2]);
        next
    }

    fn process_noise_cov(&self) -> DMatrix<f64> {
        self.noise.cov().clone()
    }

    fn angular_dims(&self) -> &[usize] {
        &self.angular
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use std::f64::consts::PI;

    #[test]
    fn heading_wraps() {
        let m = PlanarPoseModel::new(0.0, 0.0).unwrap();
        let x = m.propagate_deterministic(&dvector![0.0, 0.0, 3.0], &dvector![1.0, 0.5]);
        assert!(x[2] > -PI && x[2] <= PI);
        assert!((x[0] - 3f64.cos()).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_matches_deterministic() {
        let m = PlanarPoseModel::new(0.0, 0.0).unwrap();
        let mut rng = RngStream::new(5);
        let x = dvector![1.0, 2.0, -3.1];
        let u = dvector![0.3, -0.2];
        assert_eq!(m.propagate(&x, &u, &mut rng), m.propagate_deterministic(&x, &u));
    }
}
