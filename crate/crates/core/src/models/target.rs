//! Fixed targets posed as likelihoods. The observation argument is ignored,
//! which lets static inference problems run through the filter update.

use nalgebra::{DMatrix, DVector};

use super::ObservationModel;
use crate::error::{invalid, Result};
use crate::particles::{Observation, StateVector};

/// Unnormalized Gaussian `exp(-(x - mu)^T P (x - mu) / 2)` with precision `P`.
#[derive(Clone, Debug)]
pub struct GaussianTarget {
    mean: DVector<f64>,
    precision: DMatrix<f64>,
}

impl GaussianTarget {
    pub fn new(mean: DVector<f64>, precision: DMatrix<f64>) -> Result<Self> {
        if precision.shape() != (mean.len(), mean.len()) {
            return Err(invalid("precision must be d x d"));
        }
        if precision.clone().cholesky().is_none() {
            return Err(invalid("precision must be positive definite"));
        }
        Ok(Self { mean, precision })
    }

    pub fn standard(d: usize) -> Self {
        Self {
            mean: DVector::zeros(d),
            precision: DMatrix::identity(d, d),
        }
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }
}

impl ObservationModel for GaussianTarget {
    fn state_dim(&self) -> usize {
        self.mean.len()
    }

    fn log_likelihood(&self, x: &StateVector, _z: &Observation) -> f64 {
        let r = x - &self.mean;
        -0.5 * r.dot(&(&self.precision * &r))
    }

    fn score(&self, x: &StateVector, _z: &Observation) -> StateVector {
        -(&self.precision * (x - &self.mean))
    }

    fn curvature(&self, _x: &StateVector, _z: &Observation) -> Option<DMatrix<f64>> {
        Some(self.precision.clone())
    }
}

/// Mixture of isotropic Gaussians with a shared standard deviation.
#[derive(Clone, Debug)]
pub struct GaussianMixtureTarget {
    log_weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    std: f64,
}

impl GaussianMixtureTarget {
    pub fn new(weights: Vec<f64>, means: Vec<DVector<f64>>, std: f64) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() {
            return Err(invalid("mixture needs one weight per component"));
        }
        if weights.iter().any(|w| !(*w > 0.0)) || !(std > 0.0) {
            return Err(invalid("mixture weights and std must be positive"));
        }
        let d = means[0].len();
        if means.iter().any(|m| m.len() != d) {
            return Err(invalid("mixture means must share a dimension"));
        }
        let total: f64 = weights.iter().sum();
        Ok(Self {
            log_weights: weights.iter().map(|w| (w / total).ln()).collect(),
            means,
            std,
        })
    }

    /// Equal-weight mixture with modes at `-offset` and `+offset` in 1D.
    pub fn symmetric_bimodal(offset: f64, std: f64) -> Result<Self> {
        Self::new(
            vec![0.5, 0.5],
            vec![DVector::from_element(1, -offset), DVector::from_element(1, offset)],
            std,
        )
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    fn component_logs(&self, x: &StateVector) -> Vec<f64> {
        let s2 = self.std * self.std;
        let d = x.len() as f64;
        let norm = -0.5 * d * (2.0 * std::f64::consts::PI * s2).ln();
        self.means
            .iter()
            .zip(&self.log_weights)
            .map(|(m, lw)| lw + norm - (x - m).norm_squared() / (2.0 * s2))
            .collect()
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|a| (a - max).exp()).sum::<f64>().ln()
}

impl ObservationModel for GaussianMixtureTarget {
    fn state_dim(&self) -> usize {
        self.means[0].len()
    }

    fn log_likelihood(&self, x: &StateVector, _z: &Observation) -> f64 {
        log_sum_exp(&self.component_logs(x))
    }

    fn score(&self, x: &StateVector, _z: &Observation) -> StateVector {
        let logs = self.component_logs(x);
        let total = log_sum_exp(&logs);
        let s2 = self.std * self.std;
        let mut g = DVector::zeros(x.len());
        for (m, l) in self.means.iter().zip(&logs) {
            let resp = (l - total).exp();
            g.axpy(-resp / s2, &(x - m), 1.0);
        }
        g
    }
}
