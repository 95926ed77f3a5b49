use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::optimizers::OptimizerKind;
use crate::steinflow::PriorKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KernelChoice {
    /// Isotropic RBF, median-heuristic bandwidth recomputed every iteration.
    IsotropicMedian,
    /// Anisotropic RBF with the averaged curvature as metric. Falls back to
    /// the isotropic kernel when the model has no curvature.
    #[default]
    HessianScaled,
}

/// What the L-BFGS gradient differences are taken from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CurvatureSource {
    /// The flow direction, kernel terms included.
    #[default]
    Flow,
    /// Each particle's own posterior score.
    Score,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReprojectionConfig {
    /// Log-likelihood gap to the leader that triggers re-projection. `None`
    /// uses half the 99% chi-square quantile with one degree of freedom per
    /// observation pair.
    #[serde(default)]
    pub threshold: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    #[default]
    Stein,
    /// Bootstrap filter. Without resampling the weights accumulate.
    Particle { resample: bool },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub name: String,
    #[serde(default)]
    pub algorithm: Algorithm,
    pub n: usize,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub kernel: KernelChoice,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub prior: PriorKind,
    #[serde(default)]
    pub curvature_source: CurvatureSource,
    /// Seed L-BFGS with the inverse of the kernel-weighted Gauss-Newton
    /// curvature of each particle.
    #[serde(default = "default_true")]
    pub curvature_seed: bool,
    #[serde(default)]
    pub reprojection: Option<ReprojectionConfig>,
    #[serde(default)]
    pub seed: u64,
}

fn default_eps() -> f64 {
    0.05
}

fn default_iterations() -> usize {
    25
}

fn default_true() -> bool {
    true
}

impl FilterConfig {
    /// Hessian-scaled kernel with per-particle L-BFGS.
    pub fn spf(n: usize) -> Self {
        Self {
            name: "SPF".into(),
            algorithm: Algorithm::Stein,
            n,
            eps: default_eps(),
            iterations: default_iterations(),
            kernel: KernelChoice::HessianScaled,
            optimizer: OptimizerKind::Lbfgs { m: 10 },
            prior: PriorKind::Gaussian,
            curvature_source: CurvatureSource::Flow,
            curvature_seed: true,
            reprojection: None,
            seed: 0,
        }
    }

    /// Isotropic median kernel with Adam and no curvature information.
    pub fn svgdpf(n: usize, lr: f64) -> Self {
        Self {
            name: "SVGDPF".into(),
            kernel: KernelChoice::IsotropicMedian,
            optimizer: OptimizerKind::Adam { lr },
            curvature_seed: false,
            ..Self::spf(n)
        }
    }

    pub fn pf(n: usize) -> Self {
        Self {
            name: "PF".into(),
            algorithm: Algorithm::Particle { resample: true },
            ..Self::spf(n)
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid(format!("{}: particle count must be at least 1", self.name)));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(invalid(format!("{}: step size must be positive", self.name)));
        }
        if self.iterations == 0 {
            return Err(invalid(format!("{}: need at least one inner iteration", self.name)));
        }
        match self.optimizer {
            OptimizerKind::Lbfgs { m: 0 } => {
                return Err(invalid(format!("{}: L-BFGS memory must be positive", self.name)))
            }
            OptimizerKind::Adam { lr } if !(lr > 0.0) => {
                return Err(invalid(format!("{}: Adam learning rate must be positive", self.name)))
            }
            _ => {}
        }
        if let Some(ReprojectionConfig { threshold: Some(t) }) = self.reprojection {
            if !(t > 0.0) {
                return Err(invalid(format!("{}: re-projection threshold must be positive", self.name)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_json() {
        let cfg: FilterConfig = serde_json::from_str(r#"{"name": "a", "n": 10}"#).unwrap();
        assert_eq!(cfg.eps, 0.05);
        assert_eq!(cfg.iterations, 25);
        assert_eq!(cfg.optimizer, OptimizerKind::Lbfgs { m: 10 });
        assert_eq!(cfg.kernel, KernelChoice::HessianScaled);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        assert!(FilterConfig::spf(0).validate().is_err());
        let mut c = FilterConfig::spf(5);
        c.eps = 0.0;
        assert!(c.validate().is_err());
        let mut c = FilterConfig::spf(5);
        c.iterations = 0;
        assert!(c.validate().is_err());
        assert!(serde_json::from_str::<FilterConfig>(r#"{"name": "a", "n": 1, "bogus": 1}"#).is_err());
    }

    #[test]
    fn round_trip() {
        let c = FilterConfig::svgdpf(20, 0.1);
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<FilterConfig>(&s).unwrap(), c);
    }
}
