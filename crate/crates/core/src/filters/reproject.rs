//! Guidance of low-likelihood particles toward the best-explaining one.
//!
//! Flagged particles keep their positions; only their next score evaluation
//! changes, using the leader's observation correspondences as anchors.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::config::ReprojectionConfig;
use crate::models::ObservationModel;
use crate::particles::{Observation, StateVector};

/// Per-particle anchors for the next score evaluation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReprojectionPlan {
    pub leader: Option<usize>,
    pub anchors: Vec<Option<Vec<f64>>>,
}

impl ReprojectionPlan {
    pub fn none(n: usize) -> Self {
        Self {
            leader: None,
            anchors: vec![None; n],
        }
    }

    pub fn flagged(&self) -> usize {
        self.anchors.iter().filter(|a| a.is_some()).count()
    }

    pub fn is_noop(&self) -> bool {
        self.flagged() == 0
    }
}

/// Half the 99% chi-square quantile with `dof` degrees of freedom.
pub fn default_threshold(dof: usize) -> f64 {
    let dof = dof.max(1) as f64;
    0.5 * ChiSquared::new(dof)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.99)
}

/// Flags particles whose log-likelihood trails the leader by more than the
/// threshold, or that match no observation at all, and gives them the
/// leader's correspondences.
pub fn reproject_to_leader(
    states: &[StateVector],
    log_likelihoods: &[f64],
    obs: &dyn ObservationModel,
    z: &Observation,
    cfg: &ReprojectionConfig,
) -> ReprojectionPlan {
    let n = states.len();
    let Some(leader) = (0..n)
        .filter(|&j| log_likelihoods[j].is_finite())
        .max_by(|&a, &b| log_likelihoods[a].total_cmp(&log_likelihoods[b]).then(b.cmp(&a)))
    else {
        return ReprojectionPlan::none(n);
    };
    let pairs = z.len() / 2;
    let threshold = cfg.threshold.unwrap_or_else(|| default_threshold(pairs));
    let cutoff = log_likelihoods[leader] - threshold;
    let flagged: Vec<bool> = (0..n)
        .map(|j| {
            j != leader
                && (!(log_likelihoods[j] >= cutoff) || obs.matched_count(&states[j], z) == Some(0))
        })
        .collect();
    if !flagged.iter().any(|&f| f) {
        return ReprojectionPlan::none(n);
    }
    let Some(anchors) = obs.correspondences(&states[leader], z) else {
        return ReprojectionPlan::none(n);
    };
    ReprojectionPlan {
        leader: Some(leader),
        anchors: flagged
            .into_iter()
            .map(|f| f.then(|| anchors.clone()))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{BeamModel, BeamScan, GridMap2D};
    use crate::rng::RngStream;
    use nalgebra::dvector;
    use std::sync::Arc;

    fn setup() -> (BeamModel, Observation, StateVector) {
        let (w, h) = (30, 20);
        let occ = (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                x == 0 || y == 0 || x == w - 1 || y == h - 1 || (x == 10 && y < 12)
            })
            .collect();
        let map = Arc::new(GridMap2D::from_occupancy(w, h, 1.0, occ).unwrap());
        let truth = dvector![5.5, 6.5, 0.2];
        let mut rng = RngStream::new(0);
        let scan = BeamScan::simulate(&map, &truth, 16, 40.0, 0.0, 0.2, &mut rng).unwrap();
        (BeamModel::new(map, 0.2).unwrap(), scan.to_observation(), truth)
    }

    #[test]
    fn threshold_matches_table_value() {
        // 99% quantile of chi-square with 2 dof is -2 ln(0.01).
        assert!((default_threshold(2) - 0.5 * (-2.0 * 0.01f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn all_close_is_noop() {
        let (model, z, truth) = setup();
        let states = vec![truth.clone(), &truth + dvector![0.01, 0.0, 0.0]];
        let ll: Vec<f64> = states.iter().map(|x| model.log_likelihood(x, &z)).collect();
        let plan = reproject_to_leader(&states, &ll, &model, &z, &ReprojectionConfig { threshold: None });
        assert!(plan.is_noop());
    }

    #[test]
    fn outside_particle_adopts_leader_correspondences() {
        let (model, z, truth) = setup();
        let states = vec![truth.clone(), dvector![-100.0, -100.0, 0.0]];
        let ll: Vec<f64> = states.iter().map(|x| model.log_likelihood(x, &z)).collect();
        // A huge threshold still flags the particle with no matched beams.
        let plan = reproject_to_leader(&states, &ll, &model, &z, &ReprojectionConfig { threshold: Some(1e300) });
        assert_eq!(plan.leader, Some(0));
        assert!(plan.anchors[0].is_none());
        assert_eq!(plan.anchors[1], model.correspondences(&truth, &z));
    }

    #[test]
    fn anchored_score_pulls_toward_leader() {
        let (model, z, truth) = setup();
        let lost = dvector![20.5, 14.5, 0.2];
        let anchors = model.correspondences(&truth, &z).unwrap();
        let e = model.anchored_evaluate(&lost, &z, &anchors).unwrap();
        let to_leader = &truth - &lost;
        assert!(e.score.dot(&to_leader) > 0.0);
    }
}
