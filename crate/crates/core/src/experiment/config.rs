use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::FilterConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", content = "params", rename_all = "kebab-case")]
pub enum Scenario {
    LingaussVerify(LinGaussParams),
    MultimodalTrack(MultimodalParams),
    SineBank(SineParams),
    GridLocalizeGlobal(GridParams),
    GridLocalizeTrack(GridParams),
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Self::LingaussVerify(_) => "lingauss-verify",
            Self::MultimodalTrack(_) => "multimodal-track",
            Self::SineBank(_) => "sine-bank",
            Self::GridLocalizeGlobal(_) => "grid-localize-global",
            Self::GridLocalizeTrack(_) => "grid-localize-track",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LinGaussModel {
    /// Scalar random walk observed directly.
    #[default]
    Scalar,
    /// Planar constant velocity with position observations.
    Cv2d,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinGaussParams {
    pub model: LinGaussModel,
    /// Process / observation variance of the scalar model.
    pub q: f64,
    pub r: f64,
    /// Acceleration and position-noise std of the planar model.
    pub sigma_a: f64,
    pub sigma_z: f64,
    /// Initial prior std per dimension.
    pub init_std: f64,
}

impl Default for LinGaussParams {
    fn default() -> Self {
        Self {
            model: LinGaussModel::Scalar,
            q: 1.0,
            r: 1.0,
            sigma_a: 0.5,
            sigma_z: 1.0,
            init_std: 1.0,
        }
    }
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MultimodalParams {
    pub scanner: [f64; 2],
    pub obstacles: Vec<Rect>,
    pub start: [f64; 2],
    pub velocity: [f64; 2],
    /// Acceleration noise std of truth and filters.
    pub sigma_a: f64,
    /// Position noise std of the scanner readings.
    pub sigma_z: f64,
    /// Initial position / velocity std of the particle cloud.
    pub init_pos_std: f64,
    pub init_vel_std: f64,
    /// Radius around the truth for coverage.
    pub coverage_radius: f64,
}

impl Default for MultimodalParams {
    fn default() -> Self {
        Self {
            scanner: [0.0, 0.0],
            obstacles: vec![
                Rect { x0: -4.0, y0: 4.0, x1: -1.0, y1: 7.0 },
                Rect { x0: 2.0, y0: 4.0, x1: 5.0, y1: 7.0 },
            ],
            start: [-12.0, 10.0],
            velocity: [0.8, 0.0],
            sigma_a: 0.05,
            sigma_z: 0.2,
            init_pos_std: 0.5,
            init_vel_std: 0.2,
            coverage_radius: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SineParams {
    pub n_fns: usize,
    pub k: f64,
    pub sigma_z: f64,
    /// Random-walk std of amplitudes and phases, truth and filters alike.
    pub process_std: f64,
    pub amplitude: [f64; 2],
    pub phase: [f64; 2],
}

impl Default for SineParams {
    fn default() -> Self {
        Self {
            n_fns: 10,
            k: 1.0,
            sigma_z: 0.1,
            process_std: 0.01,
            amplitude: [0.5, 5.0],
            phase: [0.0, 2.0 * std::f64::consts::PI],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridParams {
    /// Map in the text grid format. The built-in two-room map when absent.
    pub map_file: Option<PathBuf>,
    pub beams: usize,
    pub max_range: f64,
    /// Std of the simulated endpoint jitter.
    pub beam_noise: f64,
    /// Std assumed by the beam likelihood.
    pub beam_sigma: f64,
    /// Forward distance per step.
    pub speed: f64,
    pub truth_noise_xy: f64,
    pub truth_noise_theta: f64,
    pub motion_noise_xy: f64,
    pub motion_noise_theta: f64,
    /// Spread of the initial cloud around the truth (tracking only).
    pub init_std_xy: f64,
    pub init_std_theta: f64,
    /// Final position error, in cells, counted as a success.
    pub success_cells: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            map_file: None,
            beams: 36,
            max_range: 40.0,
            beam_noise: 0.05,
            beam_sigma: 2.0,
            speed: 1.0,
            truth_noise_xy: 0.05,
            truth_noise_theta: 0.02,
            motion_noise_xy: 0.2,
            motion_noise_theta: 0.05,
            init_std_xy: 0.5,
            init_std_theta: 0.1,
            success_cells: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(flatten)]
    pub scenario: Scenario,
    pub filters: Vec<FilterConfig>,
    pub horizon: usize,
    #[serde(default = "one")]
    pub repeats: usize,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config. Relative map paths resolve against the
    /// config's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Scenario::GridLocalizeGlobal(p) | Scenario::GridLocalizeTrack(p) = &mut cfg.scenario {
            if let Some(m) = &p.map_file {
                if m.is_relative() {
                    if let Some(dir) = path.parent() {
                        p.map_file = Some(dir.join(m));
                    }
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.horizon == 0 {
            return err("horizon must be at least 1".into());
        }
        if self.repeats == 0 {
            return err("repeats must be at least 1".into());
        }
        if self.filters.is_empty() {
            return err("at least one filter is required".into());
        }
        for f in &self.filters {
            f.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        let mut names: Vec<&str> = self.filters.iter().map(|f| f.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return err("filter names must be unique".into());
        }
        match &self.scenario {
            Scenario::LingaussVerify(p) => {
                if !(p.q >= 0.0 && p.r > 0.0 && p.sigma_a >= 0.0 && p.sigma_z > 0.0 && p.init_std > 0.0) {
                    return err("lingauss-verify noise levels must be positive".into());
                }
            }
            Scenario::MultimodalTrack(p) => {
                if !(p.sigma_z > 0.0 && p.sigma_a >= 0.0 && p.init_pos_std > 0.0 && p.coverage_radius > 0.0) {
                    return err("multimodal-track noise levels must be positive".into());
                }
            }
            Scenario::SineBank(p) => {
                if p.n_fns == 0 || !(p.k > 0.0 && p.sigma_z > 0.0 && p.process_std >= 0.0) {
                    return err("sine-bank needs n_fns >= 1 and positive k, sigma_z".into());
                }
                if !(p.amplitude[0] < p.amplitude[1] && p.phase[0] < p.phase[1]) {
                    return err("sine-bank prior ranges must be increasing".into());
                }
            }
            Scenario::GridLocalizeGlobal(p) | Scenario::GridLocalizeTrack(p) => {
                if p.beams == 0 || !(p.max_range > 0.0 && p.beam_sigma > 0.0 && p.beam_noise >= 0.0) {
                    return err("grid scenario needs beams >= 1 and positive ranges/noise".into());
                }
                if let Some(m) = &p.map_file {
                    if !m.is_file() {
                        return err(format!("map file {} does not exist", m.display()));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_config() {
        let cfg = ScenarioConfig::from_json(
            r#"{"scenario": "sine-bank", "params": {"n_fns": 3},
                "filters": [{"name": "SPF", "n": 10}], "horizon": 5}"#,
        )
        .unwrap();
        assert_eq!(cfg.repeats, 1);
        let Scenario::SineBank(p) = &cfg.scenario else { panic!() };
        assert_eq!(p.n_fns, 3);
        assert_eq!(p.sigma_z, 0.1);
    }

    #[test]
    fn rejects_invalid_configs() {
        let bad = [
            r#"{"scenario": "sine-bank", "params": {}, "filters": [{"name": "a", "n": 1}], "horizon": 0}"#,
            r#"{"scenario": "sine-bank", "params": {}, "filters": [], "horizon": 3}"#,
            r#"{"scenario": "nope", "params": {}, "filters": [{"name": "a", "n": 1}], "horizon": 3}"#,
            r#"{"scenario": "sine-bank", "params": {"typo": 1}, "filters": [{"name": "a", "n": 1}], "horizon": 3}"#,
            r#"{"scenario": "grid-localize-global", "params": {"map_file": "/no/such/map.txt"},
                "filters": [{"name": "a", "n": 1}], "horizon": 3}"#,
            r#"{"scenario": "sine-bank", "params": {}, "filters": [{"name": "a", "n": 1}, {"name": "a", "n": 2}], "horizon": 3}"#,
        ];
        for b in bad {
            assert!(matches!(ScenarioConfig::from_json(b), Err(Error::Config(_))), "{b}");
        }
    }
}
