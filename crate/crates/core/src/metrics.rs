//! Error statistics over trajectories and particle sets.

use crate::error::{invalid, Result};
use crate::models::wrap_angle;
use crate::particles::{ParticleSet, StateVector};

/// `sqrt(mean_t |est_t - truth_t|^2)` over the selected dimensions
/// (all dimensions when `dims` is empty).
pub fn rmse_trajectory(estimates: &[StateVector], truth: &[StateVector], dims: &[usize]) -> Result<f64> {
    if estimates.is_empty() || estimates.len() != truth.len() {
        return Err(invalid(format!(
            "trajectory lengths must match and be nonempty ({} vs {})",
            estimates.len(),
            truth.len()
        )));
    }
    let total: f64 = estimates
        .iter()
        .zip(truth)
        .map(|(e, t)| squared_error(e, t, dims, false))
        .sum::<Result<f64>>()?;
    Ok((total / estimates.len() as f64).sqrt())
}

/// Per-step error norm on `dims`. Angular dims use the wrapped difference.
pub fn step_error(est: &StateVector, truth: &StateVector, dims: &[usize], angular: bool) -> Result<f64> {
    squared_error(est, truth, dims, angular).map(f64::sqrt)
}

fn squared_error(est: &StateVector, truth: &StateVector, dims: &[usize], angular: bool) -> Result<f64> {
    if est.len() != truth.len() {
        return Err(invalid("estimate and truth differ in dimension"));
    }
    let diff = |i: usize| {
        let d = est[i] - truth[i];
        if angular {
            wrap_angle(d)
        } else {
            d
        }
    };
    if dims.is_empty() {
        return Ok((0..est.len()).map(|i| diff(i).powi(2)).sum());
    }
    if dims.iter().any(|&i| i >= est.len()) {
        return Err(invalid("error dimension out of range"));
    }
    Ok(dims.iter().map(|&i| diff(i).powi(2)).sum())
}

/// Linear-interpolation quantiles (position `q (n - 1)` in the sorted data).
pub fn quantiles(values: &[f64], qs: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(invalid("quantiles of an empty sequence"));
    }
    if qs.iter().any(|q| !(0.0..=1.0).contains(q)) {
        return Err(invalid("quantile fractions must lie in [0, 1]"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Ok(qs
        .iter()
        .map(|q| {
            let pos = q * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = pos - lo as f64;
            sorted[lo] + frac * (sorted[hi] - sorted[lo])
        })
        .collect())
}

pub fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Fraction of particles whose nearest mode is within `radius`, per mode.
/// Ties go to the lower mode index.
pub fn mode_coverage(p: &ParticleSet, modes: &[StateVector], radius: f64) -> Result<Vec<f64>> {
    if modes.is_empty() || !(radius > 0.0) {
        return Err(invalid("mode coverage needs modes and a positive radius"));
    }
    let mut counts = vec![0usize; modes.len()];
    for x in p.states() {
        let (best, dist) = modes
            .iter()
            .enumerate()
            .map(|(i, m)| (i, (x - m).norm()))
            .fold((0, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc });
        if dist <= radius {
            counts[best] += 1;
        }
    }
    Ok(counts.into_iter().map(|c| c as f64 / p.len() as f64).collect())
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dvector, DVector};
    use proptest::prelude::*;

    #[test]
    fn rmse_examples() {
        let t = vec![dvector![0.0, 0.0], dvector![0.0, 0.0]];
        assert_eq!(rmse_trajectory(&t, &t, &[]).unwrap(), 0.0);
        let e = vec![dvector![0.0, 0.0], dvector![1.0, 1.0]];
        assert!((rmse_trajectory(&e, &t, &[]).unwrap() - 1.0).abs() < 1e-15);
        let biased: Vec<_> = t.iter().map(|x| x + dvector![0.0, -0.7]).collect();
        assert!((rmse_trajectory(&biased, &t, &[1]).unwrap() - 0.7).abs() < 1e-15);
        assert!(rmse_trajectory(&e[..1], &t, &[]).is_err());
    }

    #[test]
    fn wrapped_angle_error() {
        let e = step_error(&dvector![3.1], &dvector![-3.1], &[], true).unwrap();
        assert!((e - (2.0 * std::f64::consts::PI - 6.2)).abs() < 1e-12);
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(quantiles(&[2.5; 7], &[0.1, 0.5, 0.9]).unwrap(), vec![2.5; 3]);
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert!((quantiles(&v, &[0.5]).unwrap()[0] - 50.5).abs() < 1e-12);
        assert_eq!(quantiles(&v, &[0.0, 1.0]).unwrap(), vec![1.0, 100.0]);
        assert!(quantiles(&[], &[0.5]).is_err());
    }

    #[test]
    fn ess_examples() {
        assert!((effective_sample_size(&[0.02; 50]) - 50.0).abs() < 1e-9);
        assert_eq!(effective_sample_size(&[0.0, 1.0, 0.0]), 1.0);
        assert_eq!(effective_sample_size(&[0.5, 0.5, 0.0, 0.0]), 2.0);
    }

    #[test]
    fn coverage_examples() {
        let modes = vec![dvector![-2.0], dvector![2.0]];
        let at_a = ParticleSet::new(vec![dvector![-2.0]; 4]).unwrap();
        assert_eq!(mode_coverage(&at_a, &modes, 0.5).unwrap(), vec![1.0, 0.0]);
        let mut states = vec![dvector![-2.1]; 27];
        states.extend(vec![dvector![1.9]; 23]);
        let cov = mode_coverage(&ParticleSet::new(states).unwrap(), &modes, 10.0).unwrap();
        assert!((cov[0] - 0.54).abs() < 1e-12 && (cov[1] - 0.46).abs() < 1e-12);
        let tie = ParticleSet::new(vec![dvector![0.0]]).unwrap();
        assert_eq!(mode_coverage(&tie, &modes, 5.0).unwrap(), vec![1.0, 0.0]);
    }

    proptest! {
        #[test]
        fn ess_bounds_and_permutation(raw in prop::collection::vec(0.01f64..1.0, 1..30), rot in 0usize..30) {
            let total: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let ess = effective_sample_size(&w);
            prop_assert!(ess >= 1.0 - 1e-9 && ess <= w.len() as f64 + 1e-9);
            let mut r = w.clone();
            r.rotate_left(rot % w.len());
            prop_assert!((effective_sample_size(&r) - ess).abs() < 1e-9);
        }

        #[test]
        fn rmse_of_concatenation(errs in prop::collection::vec(-3.0f64..3.0, 2..40), cut in 1usize..39) {
            let cut = cut.min(errs.len() - 1);
            let est: Vec<_> = errs.iter().map(|e| DVector::from_element(1, *e)).collect();
            let truth = vec![DVector::zeros(1); errs.len()];
            let all = rmse_trajectory(&est, &truth, &[]).unwrap();
            let a = rmse_trajectory(&est[..cut], &truth[..cut], &[]).unwrap();
            let b = rmse_trajectory(&est[cut..], &truth[cut..], &[]).unwrap();
            let n = errs.len() as f64;
            let combined = ((a * a * cut as f64 + b * b * (n - cut as f64)) / n).sqrt();
            prop_assert!((all - combined).abs() < 1e-12);
        }
    }
}
