//! Property suites runnable from the command line with fixed seeds.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector2};
use serde::Serialize;

use super::config::{LinGaussModel, LinGaussParams, Scenario, ScenarioConfig};
use super::maps::two_room_map;
use super::runner::run_scenario;
use crate::error::{Error, Result};
use crate::filters::{low_variance_resample, FilterConfig};
use crate::kernels::{gram_and_grads, median_heuristic, KernelSpec};
use crate::models::{
    BeamModel, BeamScan, GaussianMixtureTarget, GaussianTarget, LinearGaussianModel, ObservationModel, ScannerModel,
    SineBankModel,
};
use crate::particles::{Observation, StateVector};
use crate::rng::{Purpose, RngStream};
use crate::steinflow::{phi_hat, PriorApprox};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Gradients,
    Stein,
    Resampling,
    Oracle,
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradients" => Ok(Self::Gradients),
            "stein" => Ok(Self::Stein),
            "resampling" => Ok(Self::Resampling),
            "oracle" => Ok(Self::Oracle),
            _ => Err(Error::Config(format!("unknown suite {s:?} (gradients | stein | resampling | oracle)"))),
        }
    }
}

/// One checked invariant: the observed value must not exceed the bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub module: &'static str,
    pub invariant: String,
    pub observed: f64,
    pub bound: f64,
    pub pass: bool,
}

impl CheckResult {
    fn at_most(module: &'static str, invariant: impl Into<String>, observed: f64, bound: f64) -> Self {
        Self {
            module,
            invariant: invariant.into(),
            observed,
            bound,
            pass: observed <= bound,
        }
    }
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}::{} observed {:.3e} bound {:.3e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.module,
            self.invariant,
            self.observed,
            self.bound
        )
    }
}

pub fn run_suite(suite: Suite) -> Result<Vec<CheckResult>> {
    match suite {
        Suite::Gradients => gradients(),
        Suite::Stein => stein(),
        Suite::Resampling => resampling(),
        Suite::Oracle => oracle(),
    }
}

/// Central finite-difference gradient of `f` at `x` with step `h`.
pub fn finite_difference<F: Fn(&StateVector) -> f64>(f: F, x: &StateVector, h: f64) -> StateVector {
    let mut g = DVector::zeros(x.len());
    for i in 0..x.len() {
        let mut a = x.clone();
        let mut b = x.clone();
        a[i] += h;
        b[i] -= h;
        g[i] = (f(&a) - f(&b)) / (2.0 * h);
    }
    g
}

/// `|analytic - fd| / |fd|`, with the denominator floored at 1e-6.
pub fn relative_error(analytic: &StateVector, fd: &StateVector) -> f64 {
    (analytic - fd).norm() / fd.norm().max(1e-6)
}

fn worst_score_error(
    model: &dyn ObservationModel,
    cases: &[(StateVector, Observation)],
    h: f64,
) -> f64 {
    cases
        .iter()
        .map(|(x, z)| relative_error(&model.score(x, z), &finite_difference(|y| model.log_likelihood(y, z), x, h)))
        .fold(0.0, f64::max)
}

const POINTS: usize = 100;

fn gradients() -> Result<Vec<CheckResult>> {
    let mut rng = RngStream::new(0x6772_6164).child(0, Purpose::Test);
    let mut out = Vec::new();

    let bank = SineBankModel::new(10, 1.0, 0.1)?;
    let cases: Vec<_> = (0..POINTS)
        .map(|i| {
            let at = bank.at_time(1.0 + i as f64 * 0.37);
            let x = DVector::from_fn(20, |k, _| if k % 2 == 0 { rng.uniform_range(0.5, 5.0) } else { rng.uniform_range(0.0, 6.3) });
            let truth = DVector::from_fn(20, |k, _| if k % 2 == 0 { rng.uniform_range(0.5, 5.0) } else { rng.uniform_range(0.0, 6.3) });
            let z = at.sample_observation(&truth, &mut rng);
            (at, x, z)
        })
        .collect();
    let worst = cases
        .iter()
        .map(|(m, x, z)| relative_error(&m.score(x, z), &finite_difference(|y| m.log_likelihood(y, z), x, 1e-6)))
        .fold(0.0, f64::max);
    out.push(CheckResult::at_most("models::sine", "score_vs_central_fd", worst, 1e-5));

    let d = 6;
    let a = DMatrix::from_fn(d, d, |_, _| rng.standard_normal());
    let precision = &a * a.transpose() + DMatrix::identity(d, d);
    let gauss = GaussianTarget::new(rng.standard_normal_vector(d), precision)?;
    let cases: Vec<_> = (0..POINTS).map(|_| (rng.standard_normal_vector(d) * 2.0, DVector::zeros(0))).collect();
    out.push(CheckResult::at_most("models::target", "gaussian_score_vs_central_fd", worst_score_error(&gauss, &cases, 1e-5), 1e-5));

    let mix = GaussianMixtureTarget::new(
        vec![0.3, 0.7],
        vec![DVector::from_element(3, -1.0), DVector::from_element(3, 1.5)],
        0.8,
    )?;
    let cases: Vec<_> = (0..POINTS).map(|_| (rng.standard_normal_vector(3) * 2.0, DVector::zeros(0))).collect();
    out.push(CheckResult::at_most("models::target", "mixture_score_vs_central_fd", worst_score_error(&mix, &cases, 1e-5), 1e-5));

    let lin = LinearGaussianModel::constant_velocity_2d(0.5, 0.7)?;
    let cases: Vec<_> = (0..POINTS)
        .map(|_| {
            let x = rng.standard_normal_vector(4) * 3.0;
            let z = lin.sample_observation(&rng.standard_normal_vector(4), &mut rng);
            (x, z)
        })
        .collect();
    out.push(CheckResult::at_most("models::linear", "score_vs_central_fd", worst_score_error(&lin, &cases, 1e-5), 1e-5));

    let scanner = ScannerModel::new(Vector2::new(0.0, 0.0), 0.3, 4)?;
    let cases: Vec<_> = (0..POINTS)
        .map(|_| {
            let x = rng.standard_normal_vector(4) * 5.0;
            let z = scanner.sample_reading(Vector2::new(x[0] + rng.normal(0.0, 1.0), x[1] + rng.normal(0.0, 1.0)), &mut rng);
            (x, z)
        })
        .collect();
    out.push(CheckResult::at_most("models::scanner", "score_vs_central_fd", worst_score_error(&scanner, &cases, 1e-5), 1e-5));

    let map = Arc::new(two_room_map());
    let beams = BeamModel::new(map.clone(), 0.5)?;
    let free = map.free_cells();
    let cases: Vec<_> = (0..POINTS)
        .map(|_| {
            let (cx, cy) = free[rng.index(free.len())];
            let c = map.cell_center(cx, cy);
            let truth = DVector::from_vec(vec![c.x, c.y, rng.uniform_range(-3.1, 3.1)]);
            let z = BeamScan::simulate(&map, &truth, 36, 40.0, 0.05, 0.5, &mut rng).map(|s| s.to_observation());
            let x = DVector::from_vec(vec![
                truth[0] + rng.normal(0.0, 0.7),
                truth[1] + rng.normal(0.0, 0.7),
                truth[2] + rng.normal(0.0, 0.1),
            ]);
            z.map(|z| (x, z))
        })
        .collect::<Result<_>>()?;
    out.push(CheckResult::at_most("models::beam", "score_vs_central_fd", worst_score_error(&beams, &cases, 1e-7), 1e-3));

    let states: Vec<StateVector> = (0..30).map(|_| rng.standard_normal_vector(3)).collect();
    let gaussian_prior = PriorApprox::gaussian_fit(&states, &[])?;
    let kde = PriorApprox::kde(&states, KernelSpec::isotropic(median_heuristic(&states)?)?)?;
    for (name, prior) in [("gaussian_prior_score_vs_central_fd", gaussian_prior), ("kde_prior_score_vs_central_fd", kde)] {
        let worst = (0..POINTS)
            .map(|_| {
                let x = rng.standard_normal_vector(3) * 1.5;
                relative_error(&prior.evaluate(&x).1, &finite_difference(|y| prior.evaluate(y).0, &x, 1e-5))
            })
            .fold(0.0, f64::max);
        out.push(CheckResult::at_most("steinflow", name, worst, 1e-5));
    }

    let metric = {
        let a = DMatrix::from_fn(3, 3, |_, _| rng.standard_normal());
        &a * a.transpose() + DMatrix::identity(3, 3)
    };
    let spec = KernelSpec::anisotropic(metric)?;
    let gram = gram_and_grads(&states, &spec)?;
    let mut worst: f64 = 0.0;
    for j in 0..states.len() {
        for l in 0..states.len() {
            let fd = finite_difference(|y| kernel_value(&spec, y, &states[l]), &states[j], 1e-6);
            let analytic = DVector::from_column_slice(gram.grad(j, l));
            let err = (&analytic - &fd).norm() / fd.norm().max(1e-6);
            worst = worst.max(if fd.norm() < 1e-9 { (&analytic - &fd).norm() } else { err });
        }
    }
    out.push(CheckResult::at_most("kernels", "gram_gradient_vs_central_fd", worst, 1e-5));
    Ok(out)
}

fn kernel_value(spec: &KernelSpec, x: &StateVector, y: &StateVector) -> f64 {
    match spec {
        KernelSpec::Isotropic { h } => crate::kernels::rbf_eval(x, y, *h),
        KernelSpec::Anisotropic { metric, d } => crate::kernels::scaled_rbf_eval(x, y, metric, *d),
    }
}

/// Mean flow direction over `n` standard normal samples in `d` dimensions,
/// median-heuristic kernel. Small when the Stein identity holds.
pub fn stein_mean_norm(n: usize, d: usize, seed: u64) -> Result<f64> {
    let mut rng = RngStream::new(seed).child(0, Purpose::Test);
    let states: Vec<StateVector> = (0..n).map(|_| rng.standard_normal_vector(d)).collect();
    let scores: Vec<StateVector> = states.iter().map(|x| -x).collect();
    let gram = gram_and_grads(&states, &KernelSpec::isotropic(median_heuristic(&states)?)?)?;
    let phi = phi_hat(&scores, &gram)?;
    let mean = phi.directions.iter().fold(DVector::zeros(d), |acc, v| acc + v) / n as f64;
    Ok(mean.norm())
}

fn stein() -> Result<Vec<CheckResult>> {
    (0..5)
        .map(|seed| {
            Ok(CheckResult::at_most(
                "steinflow",
                format!("mean_phi_norm_n1000_seed{seed}"),
                stein_mean_norm(1000, 2, seed)?,
                0.1,
            ))
        })
        .collect()
}

/// Largest relative deviation of the mean resampled counts from `N w_j`.
pub fn resampling_count_deviation(weights: &[f64], trials: usize, seed: u64) -> f64 {
    let mut rng = RngStream::new(seed).child(0, Purpose::Resample);
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    let mut counts = vec![0usize; n];
    for _ in 0..trials {
        for i in low_variance_resample(weights, &mut rng) {
            counts[i] += 1;
        }
    }
    (0..n)
        .filter(|&j| weights[j] > 0.0)
        .map(|j| {
            let expected = n as f64 * weights[j] / total;
            (counts[j] as f64 / trials as f64 - expected).abs() / expected
        })
        .fold(0.0, f64::max)
}

fn resampling() -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let weight_sets: [&[f64]; 3] = [
        &[0.1, 0.2, 0.3, 0.4],
        &[0.05, 0.05, 0.4, 0.15, 0.35, 0.0, 0.0, 0.0],
        &[0.6, 0.1, 0.1, 0.1, 0.1],
    ];
    for (i, w) in weight_sets.iter().enumerate() {
        out.push(CheckResult::at_most(
            "filters::resample",
            format!("expected_counts_set{i}"),
            resampling_count_deviation(w, 100_000, i as u64),
            0.01,
        ));
    }
    let mut rng = RngStream::new(7).child(0, Purpose::Resample);
    let uniform = vec![1.0 / 37.0; 37];
    let mut misses = 0usize;
    for _ in 0..1000 {
        let idx = low_variance_resample(&uniform, &mut rng);
        misses += idx.iter().enumerate().filter(|(k, &i)| *k != i).count();
    }
    out.push(CheckResult::at_most("filters::resample", "uniform_returns_each_index_once", misses as f64, 0.0));
    Ok(out)
}

/// Kalman-oracle scenario: SPF with N = 100 and 30 inner iterations over
/// `repeats` seeds of a linear-Gaussian system.
pub fn oracle_config(model: LinGaussModel, repeats: usize, seed: u64) -> ScenarioConfig {
    let spf = FilterConfig {
        eps: 0.5,
        iterations: 30,
        ..FilterConfig::spf(100)
    };
    ScenarioConfig {
        scenario: Scenario::LingaussVerify(LinGaussParams {
            model,
            ..LinGaussParams::default()
        }),
        filters: vec![spf],
        horizon: 30,
        repeats,
        seed,
    }
}

/// Worst per-dimension gap RMSE over `0.1 sqrt(P_ss)`, pooled over all
/// repeats and steps, and worst final variance ratio deviation of any repeat.
pub fn oracle_margins(cfg: &ScenarioConfig) -> Result<(f64, f64)> {
    let (_, summary) = run_scenario(cfg)?;
    let ss = summary.steady_state_std.clone().ok_or_else(|| Error::Config("not a linear scenario".into()))?;
    let f = &summary.filters[0];
    if f.failed > 0 {
        return Ok((f64::INFINITY, f64::INFINITY));
    }
    let per_repeat = f.gap_rmse.as_deref().unwrap_or_default();
    let gap = ss
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let ms = per_repeat.iter().map(|g| g[i] * g[i]).sum::<f64>() / per_repeat.len().max(1) as f64;
            ms.sqrt() / (0.1 * s)
        })
        .fold(0.0, f64::max);
    let var = f
        .final_var_ratio
        .iter()
        .flatten()
        .flat_map(|per_dim| per_dim.iter().map(|r| (r - 1.0).abs()))
        .fold(0.0, f64::max);
    Ok((gap, var))
}

fn oracle() -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for (name, model) in [("scalar", LinGaussModel::Scalar), ("cv2d", LinGaussModel::Cv2d)] {
        let (gap, var) = oracle_margins(&oracle_config(model, 10, 0))?;
        out.push(CheckResult::at_most("filters::spf", format!("{name}_gap_rmse_over_tenth_ss_std"), gap, 1.0));
        out.push(CheckResult::at_most("filters::spf", format!("{name}_final_variance_ratio_deviation"), var, 0.25));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_parse() {
        assert_eq!("stein".parse::<Suite>().unwrap(), Suite::Stein);
        assert!("bogus".parse::<Suite>().is_err());
    }

    #[test]
    fn finite_difference_of_quadratic() {
        let x = DVector::from_vec(vec![1.0, -2.0]);
        let g = finite_difference(|y| y.norm_squared(), &x, 1e-4);
        assert!((g - &x * 2.0).norm() < 1e-8);
    }

    #[test]
    fn resampling_suite_passes() {
        for r in run_suite(Suite::Resampling).unwrap() {
            assert!(r.pass, "{r}");
        }
    }

    #[test]
    fn result_display() {
        let r = CheckResult::at_most("m", "inv", 2.0, 1.0);
        assert!(!r.pass);
        assert!(r.to_string().starts_with("FAIL m::inv"));
    }
}
