use nalgebra::{DMatrix, DVector};

use super::ObservationModel;
use crate::error::{invalid, Result};
use crate::particles::{Observation, StateVector};
use crate::rng::RngStream;

/// Bank of sinusoids `g_i(t) = A_i sin(k (t + phi_i))` observed with Gaussian noise.
///
/// The state interleaves `(A_0, phi_0, A_1, phi_1, ...)`, so `d = 2 n_fns`.
/// The model is bound to one observation time; use
/// [`at_time`](Self::at_time) to move it.
#[derive(Clone, Debug, PartialEq)]
pub struct SineBankModel {
    n_fns: usize,
    k: f64,
    sigma_z: f64,
    time: f64,
}

impl SineBankModel {
    pub fn new(n_fns: usize, k: f64, sigma_z: f64) -> Result<Self> {
        if n_fns == 0 {
            return Err(invalid("sine bank needs at least one function"));
        }
        if !(k > 0.0 && sigma_z > 0.0) {
            return Err(invalid("period and noise std must be positive"));
        }
        Ok(Self {
            n_fns,
            k,
            sigma_z,
            time: 0.0,
        })
    }

    pub fn at_time(&self, time: f64) -> Self {
        Self { time, ..self.clone() }
    }

    pub fn n_fns(&self) -> usize {
        self.n_fns
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn sigma_z(&self) -> f64 {
        self.sigma_z
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Phase period `2 pi / k`.
    pub fn phase_period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.k
    }

    /// Noise-free function values at the bound time.
    pub fn signal(&self, x: &StateVector) -> DVector<f64> {
        DVector::from_iterator(
            self.n_fns,
            (0..self.n_fns).map(|i| x[2 * i] * (self.k * (self.time + x[2 * i + 1])).sin()),
        )
    }

    pub fn sample_observation(&self, x: &StateVector, rng: &mut RngStream) -> Observation {
        let mut z = self.signal(x);
        for v in z.iter_mut() {
            *v += self.sigma_z * rng.standard_normal();
        }
        z
    }
}

impl ObservationModel for SineBankModel {
    fn state_dim(&self) -> usize {
        2 * self.n_fns
    }

    fn log_likelihood(&self, x: &StateVector, z: &Observation) -> f64 {
        let g = self.signal(x);
        let s2 = self.sigma_z * self.sigma_z;
        -(z - g).norm_squared() / (2.0 * s2)
    }

    fn score(&self, x: &StateVector, z: &Observation) -> StateVector {
        let s2 = self.sigma_z * self.sigma_z;
        let mut grad = DVector::zeros(2 * self.n_fns);
        for i in 0..self.n_fns {
            let (a, phi) = (x[2 * i], x[2 * i + 1]);
            let arg = self.k * (self.time + phi);
            let residual = z[i] - a * arg.sin();
            grad[2 * i] = residual * arg.sin() / s2;
            grad[2 * i + 1] = residual * a * self.k * arg.cos() / s2;
        }
        grad
    }

    fn curvature(&self, x: &StateVector, _z: &Observation) -> Option<DMatrix<f64>> {
        let s2 = self.sigma_z * self.sigma_z;
        let mut c = DMatrix::zeros(2 * self.n_fns, 2 * self.n_fns);
        for i in 0..self.n_fns {
            let (a, phi) = (x[2 * i], x[2 * i + 1]);
            let arg = self.k * (self.time + phi);
            let ja = arg.sin();
            let jp = a * self.k * arg.cos();
            c[(2 * i, 2 * i)] = ja * ja / s2;
            c[(2 * i, 2 * i + 1)] = ja * jp / s2;
            c[(2 * i + 1, 2 * i)] = ja * jp / s2;
            c[(2 * i + 1, 2 * i + 1)] = jp * jp / s2;
        }
        Some(c)
    }
}
