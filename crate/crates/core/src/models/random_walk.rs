use nalgebra::{DMatrix, DVector};

use super::{GaussianNoise, TransitionModel};
use crate::error::{invalid, Result};
use crate::particles::{ControlInput, StateVector};
use crate::rng::RngStream;

/// `x' = x + u + v` with independent per-component noise. The control is
/// optional; an empty control means no drift.
#[derive(Clone, Debug)]
pub struct RandomWalkModel {
    noise: GaussianNoise,
}

impl RandomWalkModel {
    pub fn new(std: DVector<f64>) -> Result<Self> {
        if std.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(invalid("random walk std must be finite and >= 0"));
        }
        let cov = DMatrix::from_diagonal(&std.map(|s| s * s));
        Ok(Self {
            noise: GaussianNoise::new(cov)?,
        })
    }

    pub fn isotropic(d: usize, std: f64) -> Result<Self> {
        Self::new(DVector::from_element(d, std))
    }
}

impl TransitionModel for RandomWalkModel {
    fn state_dim(&self) -> usize {
        self.noise.cov().nrows()
    }

    fn propagate_deterministic(&self, x: &StateVector, u: &ControlInput) -> StateVector {
        if u.len() == x.len() {
            x + u
        } else {
            x.clone()
        }
    }

    fn propagate(&self, x: &StateVector, u: &ControlInput, rng: &mut RngStream) -> StateVector {
        self.propagate_deterministic(x, u) + self.noise.sample(rng)
    }

    fn process_noise_cov(&self) -> DMatrix<f64> {
        self.noise.cov().clone()
    }
}
