//! Process and observation models.
//!
//! The traits are object safe so filters and scenarios can hold `dyn` models.
//! Concrete models cover the linear-Gaussian oracle system, planar constant
//! velocity tracking, the sine bank, and the 2D grid-map beam model.

mod beam;
mod constant_velocity;
mod grid;
mod linear;
mod pose;
mod random_walk;
mod scanner;
mod sine;
mod target;

pub use beam::{BeamModel, BeamScan};
pub use constant_velocity::ConstantVelocityModel;
pub use grid::{FieldSample, GridMap2D};
pub use linear::LinearGaussianModel;
pub use pose::PlanarPoseModel;
pub use random_walk::RandomWalkModel;
pub use scanner::ScannerModel;
pub use sine::SineBankModel;
pub use target::{GaussianMixtureTarget, GaussianTarget};

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::particles::{ControlInput, Observation, StateVector};
use crate::rng::RngStream;

/// Log-likelihood, its gradient, and the number of beams that fell outside the map.
#[derive(Clone, Debug, PartialEq)]
pub struct LikelihoodEval {
    pub log_likelihood: f64,
    pub score: StateVector,
    pub out_of_bounds: usize,
}

/// State transition `x_t = f(x_{t-1}, u_t, v_t)`.
pub trait TransitionModel: Send + Sync {
    fn state_dim(&self) -> usize;

    /// `f(x, u, 0)`.
    fn propagate_deterministic(&self, x: &StateVector, u: &ControlInput) -> StateVector;

    /// `f(x, u, v)` with one noise draw `v`. Must equal the deterministic map
    /// when the noise covariance is zero.
    fn propagate(&self, x: &StateVector, u: &ControlInput, rng: &mut RngStream) -> StateVector;

    fn process_noise_cov(&self) -> DMatrix<f64>;

    /// State components that are angles in radians.
    fn angular_dims(&self) -> &[usize] {
        &[]
    }
}

/// Sensor model `p(z | x)` with its score.
pub trait ObservationModel: Send + Sync {
    fn state_dim(&self) -> usize;

    fn log_likelihood(&self, x: &StateVector, z: &Observation) -> f64;

    /// Gradient of [`log_likelihood`](Self::log_likelihood) with respect to `x`.
    fn score(&self, x: &StateVector, z: &Observation) -> StateVector;

    fn evaluate(&self, x: &StateVector, z: &Observation) -> LikelihoodEval {
        LikelihoodEval {
            log_likelihood: self.log_likelihood(x, z),
            score: self.score(x, z),
            out_of_bounds: 0,
        }
    }

    /// Gauss-Newton curvature `J^T J / sigma^2`, symmetric PSD. `None` when the
    /// model has no curvature capability.
    fn curvature(&self, _x: &StateVector, _z: &Observation) -> Option<DMatrix<f64>> {
        None
    }

    /// Matched map points for the observation seen from `x`, flattened as
    /// `[x0, y0, x1, y1, ...]`. Only correspondence-based models return `Some`.
    fn correspondences(&self, _x: &StateVector, _z: &Observation) -> Option<Vec<f64>> {
        None
    }

    /// Likelihood of `x` against borrowed correspondences.
    fn anchored_evaluate(
        &self,
        _x: &StateVector,
        _z: &Observation,
        _anchors: &[f64],
    ) -> Option<LikelihoodEval> {
        None
    }

    /// Number of observation elements that could be matched from `x`.
    fn matched_count(&self, _x: &StateVector, _z: &Observation) -> Option<usize> {
        None
    }
}

/// Additive Gaussian noise with a possibly singular covariance.
#[derive(Clone, Debug)]
pub struct GaussianNoise {
    cov: DMatrix<f64>,
    sqrt: DMatrix<f64>,
}

impl GaussianNoise {
    pub fn new(cov: DMatrix<f64>) -> Result<Self> {
        if !cov.is_square() {
            return Err(invalid("noise covariance must be square"));
        }
        if (&cov - cov.transpose()).amax() > 1e-12 * cov.amax().max(1.0) {
            return Err(invalid("noise covariance must be symmetric"));
        }
        let eig = cov.clone().symmetric_eigen();
        let tol = 1e-12 * eig.eigenvalues.amax().max(1.0);
        if eig.eigenvalues.iter().any(|&l| l < -tol) {
            return Err(invalid("noise covariance must be positive semidefinite"));
        }
        let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let sqrt = &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose();
        Ok(Self { cov, sqrt })
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn sample(&self, rng: &mut RngStream) -> StateVector {
        let xi = rng.standard_normal_vector(self.cov.nrows());
        &self.sqrt * xi
    }
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

pub(crate) fn check_len(v: &StateVector, expected: usize, what: &str) -> Result<()> {
    if v.len() != expected {
        return Err(invalid(format!("{what} has length {}, expected {expected}", v.len())));
    }
    Ok(())
}
