//! Posterior scores and the empirical Stein transport direction.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::{GramResult, KernelSpec};
use crate::models::{wrap_angle, ObservationModel};
use crate::particles::{Observation, ParticleSet, StateVector};

/// Covariance regularizer added to the Gaussian prior fit.
pub const PRIOR_JITTER: f64 = 1e-6;

/// How the predictive density is represented during an update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PriorKind {
    #[default]
    Gaussian,
    Kde,
    Flat,
}

/// Density-with-gradient stand-in for the predictive distribution.
#[derive(Clone, Debug)]
pub enum PriorApprox {
    /// Zero score everywhere.
    Flat,
    Gaussian {
        mean: DVector<f64>,
        precision: DMatrix<f64>,
        angular: Vec<usize>,
    },
    /// Kernel density over the predicted particles.
    Kde { centers: Vec<StateVector>, kernel: KernelSpec },
}

impl PriorApprox {
    /// Gaussian fit of the predicted set. Angular dimensions use the circular
    /// mean and wrapped residuals.
    pub fn gaussian_fit(states: &[StateVector], angular: &[usize]) -> Result<Self> {
        let p = ParticleSet::new(states.to_vec())?;
        let d = p.dim();
        let (mut mean, _) = p.mean_cov();
        for &a in angular {
            if a >= d {
                return Err(invalid("angular dimension out of range"));
            }
            let (s, c) = states
                .iter()
                .fold((0.0, 0.0), |(s, c), x| (s + x[a].sin(), c + x[a].cos()));
            mean[a] = s.atan2(c);
        }
        let n = states.len() as f64;
        let mut cov = DMatrix::zeros(d, d);
        for x in states {
            let r = residual(x, &mean, angular);
            cov.ger(1.0 / n, &r, &r, 1.0);
        }
        cov = (&cov + cov.transpose()) * 0.5;
        for i in 0..d {
            cov[(i, i)] += PRIOR_JITTER;
        }
        let precision = cov
            .cholesky()
            .ok_or(Error::Singular("predictive covariance"))?
            .inverse();
        Ok(Self::Gaussian {
            mean,
            precision: (&precision + precision.transpose()) * 0.5,
            angular: angular.to_vec(),
        })
    }

    pub fn kde(states: &[StateVector], kernel: KernelSpec) -> Result<Self> {
        if states.is_empty() {
            return Err(invalid("kernel density needs at least one center"));
        }
        Ok(Self::Kde {
            centers: states.to_vec(),
            kernel,
        })
    }

    /// Unnormalized log-density and its gradient.
    pub fn evaluate(&self, x: &StateVector) -> (f64, StateVector) {
        match self {
            Self::Flat => (0.0, DVector::zeros(x.len())),
            Self::Gaussian {
                mean,
                precision,
                angular,
            } => {
                let r = residual(x, mean, angular);
                let g = -(precision * &r);
                (0.5 * r.dot(&g), g)
            }
            Self::Kde { centers, kernel } => {
                let terms: Vec<(f64, DVector<f64>)> = centers
                    .iter()
                    .map(|c| {
                        let delta = x - c;
                        match kernel {
                            KernelSpec::Isotropic { h } => (-delta.norm_squared() / h, delta * (-2.0 / h)),
                            KernelSpec::Anisotropic { metric, d } => {
                                let md = metric * &delta;
                                (-delta.dot(&md) / *d as f64, md * (-2.0 / *d as f64))
                            }
                        }
                    })
                    .collect();
                let max = terms.iter().map(|t| t.0).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                let mut grad = DVector::zeros(x.len());
                for (e, g) in &terms {
                    let w = (e - max).exp();
                    total += w;
                    grad.axpy(w, g, 1.0);
                }
                (max + (total / centers.len() as f64).ln(), grad / total)
            }
        }
    }

    /// Curvature of the negative log-density where it is constant.
    pub fn precision(&self) -> Option<&DMatrix<f64>> {
        match self {
            Self::Gaussian { precision, .. } => Some(precision),
            _ => None,
        }
    }
}

fn residual(x: &StateVector, mean: &DVector<f64>, angular: &[usize]) -> DVector<f64> {
    let mut r = x - mean;
    for &a in angular {
        r[a] = wrap_angle(r[a]);
    }
    r
}

/// Per-particle scores of the unnormalized log-posterior.
#[derive(Clone, Debug)]
pub struct PosteriorScore {
    pub scores: Vec<StateVector>,
    pub log_densities: Vec<f64>,
    pub log_likelihoods: Vec<f64>,
    /// Total beams outside the map across all particles.
    pub out_of_bounds: usize,
}

/// Scores of `log p(z | x) + log prior(x)` for every particle.
///
/// `anchors[j] = Some(y)` swaps particle `j`'s likelihood for the model's
/// anchored form with correspondences `y`.
pub fn score_batch(
    states: &[StateVector],
    obs: &dyn ObservationModel,
    prior: &PriorApprox,
    z: &Observation,
    anchors: Option<&[Option<Vec<f64>>]>,
) -> Result<PosteriorScore> {
    if let Some(a) = anchors {
        if a.len() != states.len() {
            return Err(invalid("one anchor entry per particle required"));
        }
    }
    let rows: Vec<(StateVector, f64, f64, usize)> = states
        .par_iter()
        .enumerate()
        .map(|(j, x)| {
            let anchored = anchors
                .and_then(|a| a[j].as_deref())
                .and_then(|y| obs.anchored_evaluate(x, z, y));
            let eval = anchored.unwrap_or_else(|| obs.evaluate(x, z));
            let (lp, gp) = prior.evaluate(x);
            (eval.score + gp, eval.log_likelihood + lp, eval.log_likelihood, eval.out_of_bounds)
        })
        .collect();
    let mut out = PosteriorScore {
        scores: Vec::with_capacity(states.len()),
        log_densities: Vec::with_capacity(states.len()),
        log_likelihoods: Vec::with_capacity(states.len()),
        out_of_bounds: 0,
    };
    for (j, (s, ld, ll, oob)) in rows.into_iter().enumerate() {
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteScore { particle: j });
        }
        out.scores.push(s);
        out.log_densities.push(ld);
        out.log_likelihoods.push(ll);
        out.out_of_bounds += oob;
    }
    Ok(out)
}

/// Empirical steepest direction, one row per particle.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowDirection {
    pub directions: Vec<StateVector>,
}

impl FlowDirection {
    /// Norm of the particle-averaged direction.
    pub fn mean_norm(&self) -> f64 {
        let n = self.directions.len() as f64;
        let mut sum = DVector::zeros(self.directions[0].len());
        for d in &self.directions {
            sum += d;
        }
        sum.norm() / n
    }
}

/// `phi(x_l) = (1/N) sum_j [s_j K[j, l] + grad(j, l)]`, summed in ascending `j`.
pub fn phi_hat(scores: &[StateVector], gram: &GramResult) -> Result<FlowDirection> {
    let n = scores.len();
    if gram.len() != n {
        return Err(Error::DimensionMismatch {
            expected: gram.len(),
            got: n,
        });
    }
    let d = gram.dim();
    let directions = (0..n)
        .into_par_iter()
        .map(|l| {
            let mut acc = vec![0.0; d];
            for j in 0..n {
                let k = gram.k[(j, l)];
                let g = gram.grad(j, l);
                for i in 0..d {
                    acc[i] += scores[j][i] * k + g[i];
                }
            }
            DVector::from_iterator(d, acc.into_iter().map(|v| v / n as f64))
        })
        .collect();
    Ok(FlowDirection { directions })
}

/// Particle mean of `trace(f(x) s(x)^T + J_f(x))` for a test function `f`
/// returning its value and Jacobian. Zero in expectation under the target.
pub fn stein_trace_diagnostic<F>(states: &[StateVector], scores: &[StateVector], test_fn: F) -> f64
where
    F: Fn(&StateVector) -> (DVector<f64>, DMatrix<f64>),
{
    let total: f64 = states
        .iter()
        .zip(scores)
        .map(|(x, s)| {
            let (f, jac) = test_fn(x);
            f.dot(s) + jac.trace()
        })
        .sum();
    total / states.len() as f64
}
