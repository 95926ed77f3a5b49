use nalgebra::DMatrix;

use super::{GaussianNoise, TransitionModel};
use crate::error::{invalid, Result};
use crate::particles::{ControlInput, StateVector};
use crate::rng::RngStream;

/// Planar constant velocity over `(px, py, vx, vy)` with one-step `dt = 1`.
///
/// `p <- p + v dt`, `v <- v + u dt + e` with `e ~ N(0, sigma_a^2 I)`. The
/// control, when present, is a 2D acceleration.
#[derive(Clone, Debug)]
pub struct ConstantVelocityModel {
    sigma_a: f64,
    dt: f64,
    noise: GaussianNoise,
}

impl ConstantVelocityModel {
    pub fn new(sigma_a: f64) -> Result<Self> {
        if !(sigma_a >= 0.0 && sigma_a.is_finite()) {
            return Err(invalid("acceleration noise std must be finite and >= 0"));
        }
        let mut q = DMatrix::zeros(4, 4);
        q[(2, 2)] = sigma_a * sigma_a;
        q[(3, 3)] = sigma_a * sigma_a;
        Ok(Self {
            sigma_a,
            dt: 1.0,
            noise: GaussianNoise::new(q)?,
        })
    }

    pub fn sigma_a(&self) -> f64 {
        self.sigma_a
    }
}

impl TransitionModel for ConstantVelocityModel {
    fn state_dim(&self) -> usize {
        4
    }

    fn propagate_deterministic(&self, x: &StateVector, u: &ControlInput) -> StateVector {
        let mut next = x.clone();
        next[0] += x[2] * self.dt;
        next[1] += x[3] * self.dt;
        if u.len() == 2 {
            next[2] += u[0] * self.dt;
            next[3] += u[1] * self.dt;
        }
        next
    }

    fn propagate(&self, x: &StateVector, u: &ControlInput, rng: &mut RngStream) -> StateVector {
        self.propagate_deterministic(x, u) + self.noise.sample(rng)
    }

    fn process_noise_cov(&self) -> DMatrix<f64> {
        self.noise.cov().clone()
    }
}
