//! Filter recursions: the Stein particle filter, its first-order SVGD
//! variant, and the bootstrap particle filter.

mod config;
mod pf;
mod reproject;
mod resample;
mod spf;

pub use config::{Algorithm, CurvatureSource, FilterConfig, KernelChoice, ReprojectionConfig};
pub use pf::pf_step;
pub use reproject::{default_threshold, reproject_to_leader, ReprojectionPlan};
pub use resample::{low_variance_resample, low_variance_resample_with_offset};
pub use spf::{spf_predict, spf_step, spf_update, transport};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::models::{ObservationModel, TransitionModel};
use crate::optimizers::{AdamState, LbfgsHistory, OptimizerKind};
use crate::particles::{ControlInput, Observation, ParticleSet};
use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum OptimizerState {
    Lbfgs(LbfgsHistory),
    Adam(AdamState),
    Sgd,
}

impl OptimizerState {
    pub fn fresh(kind: OptimizerKind, dim: usize) -> Self {
        match kind {
            OptimizerKind::Lbfgs { m } => Self::Lbfgs(LbfgsHistory::new(m)),
            OptimizerKind::Adam { lr } => Self::Adam(AdamState::new(dim, lr)),
            OptimizerKind::Sgd => Self::Sgd,
        }
    }
}

/// Per-step diagnostics of the last filter step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Norm of the particle-averaged flow direction at the last iteration.
    pub mean_phi_norm: f64,
    pub rejected_pairs: usize,
    /// Observation beams outside the map, summed over particles, at the end of the update.
    pub out_of_bounds: usize,
    /// Particles given borrowed correspondences at the last iteration.
    pub reprojected: usize,
    /// Effective sample size before resampling (weighted filters only).
    pub ess: Option<f64>,
    /// Mean log-posterior over particles before each iteration and after the last.
    pub log_density_trace: Vec<f64>,
    pub updated: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FilterState {
    pub particles: ParticleSet,
    pub step: usize,
    pub config: FilterConfig,
    /// State dimensions holding angles.
    pub angular: Vec<usize>,
    pub optimizers: Vec<OptimizerState>,
    pub diagnostics: Diagnostics,
    pub log_likelihoods: Vec<f64>,
    pub log_densities: Vec<f64>,
    /// Steps at which all weights underflowed and were reset to uniform.
    pub zero_weight_resets: usize,
}

impl FilterState {
    pub fn new(particles: ParticleSet, config: FilterConfig) -> Result<Self> {
        config.validate()?;
        if particles.len() != config.n {
            return Err(invalid(format!(
                "{}: configured for {} particles, got {}",
                config.name,
                config.n,
                particles.len()
            )));
        }
        let d = particles.dim();
        Ok(Self {
            optimizers: vec![OptimizerState::fresh(config.optimizer, d); particles.len()],
            particles,
            step: 0,
            config,
            angular: Vec::new(),
            diagnostics: Diagnostics::default(),
            log_likelihoods: Vec::new(),
            log_densities: Vec::new(),
            zero_weight_resets: 0,
        })
    }

    pub fn with_angular(mut self, angular: &[usize]) -> Self {
        self.angular = angular.to_vec();
        self
    }

    pub fn reset_optimizers(&mut self) {
        let d = self.particles.dim();
        for o in &mut self.optimizers {
            *o = OptimizerState::fresh(self.config.optimizer, d);
        }
    }

    pub fn to_checkpoint(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_checkpoint(json: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(json)?;
        s.config.validate()?;
        Ok(s)
    }
}

/// One step of whichever algorithm the state is configured for. `z = None`
/// skips the update.
pub fn filter_step(
    state: &mut FilterState,
    u: &ControlInput,
    z: Option<&Observation>,
    transition: &dyn TransitionModel,
    obs: &dyn ObservationModel,
    rng: &mut RngStream,
) -> Result<()> {
    match state.config.algorithm {
        Algorithm::Stein => spf_step(state, u, z, transition, obs, rng),
        Algorithm::Particle { .. } => pf_step(state, u, z, transition, obs, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn checkpoint_round_trip() {
        let p = ParticleSet::new(vec![dvector![0.1, 0.2], dvector![0.3, -0.4]]).unwrap();
        let mut s = FilterState::new(p, FilterConfig::spf(2)).unwrap();
        s.step = 7;
        let back = FilterState::from_checkpoint(&s.to_checkpoint().unwrap()).unwrap();
        assert_eq!(back.particles, s.particles);
        assert_eq!(back.step, 7);
        assert_eq!(back.config, s.config);
    }

    #[test]
    fn count_must_match_config() {
        let p = ParticleSet::new(vec![dvector![0.1]]).unwrap();
        assert!(FilterState::new(p, FilterConfig::spf(2)).is_err());
    }
}
