//! Step-direction engines for the particle flow.

mod adam;
mod lbfgs;

pub use adam::AdamState;
pub use lbfgs::{LbfgsHistory, CURVATURE_EPS};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OptimizerKind {
    /// Per-particle L-BFGS with `m` stored pairs.
    Lbfgs { m: usize },
    Adam { lr: f64 },
    /// Fixed step along the flow direction.
    Sgd,
}

impl Default for OptimizerKind {
    fn default() -> Self {
        Self::Lbfgs { m: 10 }
    }
}
