//! State-space vectors and the nonparametric belief.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Latent state. Units are owned by the scenario (meters, radians, amplitude, phase).
pub type StateVector = DVector<f64>;
/// Control input, e.g. a commanded acceleration.
pub type ControlInput = DVector<f64>;
/// Sensor reading.
pub type Observation = DVector<f64>;

/// Relative tolerance on the weight sum.
const WEIGHT_SUM_TOL: f64 = 1e-12;

/// `N` state vectors with optional importance weights.
///
/// Stein-flow sets carry no weights (equal-weight by construction). Particle
/// filter sets carry normalized weights between the update and the resample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleSet {
    states: Vec<StateVector>,
    weights: Option<Vec<f64>>,
}

impl ParticleSet {
    /// Equal-weight set. Fails on an empty set, ragged dimensions or non-finite entries.
    pub fn new(states: Vec<StateVector>) -> Result<Self> {
        validate_states(&states)?;
        Ok(Self {
            states,
            weights: None,
        })
    }

    /// Weighted set. Weights must be nonnegative and sum to one.
    pub fn with_weights(states: Vec<StateVector>, weights: Vec<f64>) -> Result<Self> {
        validate_states(&states)?;
        if weights.len() != states.len() {
            return Err(invalid(format!(
                "{} weights for {} particles",
                weights.len(),
                states.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(invalid("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL * weights.len().max(1) as f64 {
            return Err(invalid(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self {
            states,
            weights: Some(weights),
        })
    }

    /// Builds a weighted set from unnormalized nonnegative weights.
    pub fn from_unnormalized(states: Vec<StateVector>, raw: &[f64]) -> Result<Self> {
        let total: f64 = raw.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(invalid("unnormalized weights have no positive finite mass"));
        }
        let weights = raw.iter().map(|w| w / total).collect();
        Self::with_weights(states, weights)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn into_states(self) -> Vec<StateVector> {
        self.states
    }

    /// Drops the weights, leaving an equal-weight set.
    pub fn unweighted(self) -> Self {
        Self {
            states: self.states,
            weights: None,
        }
    }

    /// Weight of particle `j`, `1/N` when unweighted.
    pub fn weight(&self, j: usize) -> f64 {
        match &self.weights {
            Some(w) => w[j],
            None => 1.0 / self.len() as f64,
        }
    }

    pub fn mean_cov(&self) -> (StateVector, DMatrix<f64>) {
        particle_mean_cov(self)
    }

    pub fn min_pairwise_distance(&self) -> Result<f64> {
        min_pairwise_distance(self)
    }
}

fn validate_states(states: &[StateVector]) -> Result<()> {
    let first = states.first().ok_or_else(|| invalid("particle set is empty"))?;
    let d = first.len();
    if d == 0 {
        return Err(invalid("state dimension must be at least 1"));
    }
    for (j, x) in states.iter().enumerate() {
        if x.len() != d {
            return Err(invalid(format!(
                "particle {j} has dimension {}, expected {d}",
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(invalid(format!("particle {j} has a non-finite entry")));
        }
    }
    Ok(())
}

/// Weighted (or uniform) mean and population covariance.
///
/// Uniform weights take the unweighted path so both agree bit for bit. A
/// single particle yields the zero covariance.
pub fn particle_mean_cov(p: &ParticleSet) -> (StateVector, DMatrix<f64>) {
    let d = p.dim();
    let uniform = match p.weights() {
        None => true,
        Some(w) => w.iter().all(|&v| v == w[0]),
    };

    let mut mean = DVector::zeros(d);
    let mut cov = DMatrix::zeros(d, d);
    if uniform {
        let n = p.len() as f64;
        for x in p.states() {
            mean += x;
        }
        mean /= n;
        for x in p.states() {
            let r = x - &mean;
            cov.ger(1.0, &r, &r, 1.0);
        }
        cov /= n;
    } else {
        let w = p.weights().expect("non-uniform path implies weights");
        let total: f64 = w.iter().sum();
        for (x, wj) in p.states().iter().zip(w) {
            mean.axpy(*wj, x, 1.0);
        }
        mean /= total;
        for (x, wj) in p.states().iter().zip(w) {
            let r = x - &mean;
            cov.ger(*wj, &r, &r, 1.0);
        }
        cov /= total;
    }
    // ger accumulates exactly symmetric terms, but keep the output symmetric
    // under any summation order.
    let cov = (&cov + cov.transpose()) * 0.5;
    (mean, cov)
}

/// Smallest Euclidean distance between two distinct particles.
pub fn min_pairwise_distance(p: &ParticleSet) -> Result<f64> {
    if p.len() < 2 {
        return Err(invalid("min_pairwise_distance needs at least two particles"));
    }
    let s = p.states();
    let mut best = f64::INFINITY;
    for j in 0..s.len() {
        for l in (j + 1)..s.len() {
            best = best.min((&s[j] - &s[l]).norm());
        }
    }
    Ok(best)
}
