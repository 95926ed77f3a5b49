//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use spf_core::experiment::check::{oracle_config, oracle_margins, resampling_count_deviation, stein_mean_norm};
use spf_core::experiment::{run_scenario, run_suite, write_steps_csv, LinGaussModel, ScenarioConfig, Suite};
use spf_core::filters::{low_variance_resample, pf_step, transport, KernelChoice};
use spf_core::kernels::{gram_and_grads, median_heuristic, KernelSpec};
use spf_core::metrics::mode_coverage;
use spf_core::models::{GaussianMixtureTarget, GaussianTarget, RandomWalkModel};
use spf_core::optimizers::OptimizerKind;
use spf_core::steinflow::phi_hat;
use spf_core::{FilterConfig, FilterState, ParticleSet, Purpose, Result, RngStream, StateVector};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn config(name: &str) -> Result<ScenarioConfig> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ScenarioConfig::load(&path)
}

fn ac1_kalman_oracle() -> Result<Outcome> {
    let start = Instant::now();
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, model) in [("1d", LinGaussModel::Scalar), ("4d", LinGaussModel::Cv2d)] {
        let (gap, var) = oracle_margins(&oracle_config(model, 10, 0))?;
        pass &= gap <= 1.0 && var <= 0.25;
        detail.push(format!("{name}: gap/(0.1 sd) {gap:.2} (<= 1), var dev {var:.2} (<= 0.25)"));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 30.0;
    detail.push(format!("{secs:.1} s (< 30)"));
    outcome(pass, detail.join("; "))
}

fn ac2_sine_bank() -> Result<Outcome> {
    let (_, summary) = run_scenario(&config("sine_bank.json")?)?;
    let rmse = |name: &str| summary.filter(name).map_or(f64::NAN, |f| f.rmse_mean);
    let (spf, pf, pf_big) = (rmse("SPF"), rmse("PF"), rmse("PF5000"));
    let pass = spf <= 5.0 && pf >= 20.0 * spf && spf < pf_big && pf_big < pf;
    outcome(
        pass,
        format!("SPF {spf:.3}, PF50 {pf:.3} (ratio {:.1}, >= 20), PF5000 {pf_big:.3} (between)", pf / spf),
    )
}

fn ac3_stein_identity() -> Result<Outcome> {
    let norms = (0..5).map(|seed| stein_mean_norm(1000, 2, seed)).collect::<Result<Vec<_>>>()?;
    let worst = norms.iter().copied().fold(0.0, f64::max);
    outcome(worst <= 0.1, format!("worst |mean phi| over 5 seeds {worst:.4} (<= 0.1)"))
}

fn ac4_gradients() -> Result<Outcome> {
    let results = run_suite(Suite::Gradients)?;
    let failed: Vec<_> = results.iter().filter(|r| !r.pass).map(|r| r.invariant.clone()).collect();
    outcome(
        failed.is_empty(),
        format!("{} scores checked at 100 points each, failed {:?}", results.len(), failed),
    )
}

fn ac5_bimodal() -> Result<Outcome> {
    let target = GaussianMixtureTarget::symmetric_bimodal(2.0, 0.5)?;
    let n = 50;
    let mut rng = RngStream::new(5).child(0, Purpose::Test);
    let start: Vec<StateVector> = (0..n).map(|_| rng.standard_normal_vector(1) * 1.5).collect();

    let cfg = FilterConfig { eps: 0.5, iterations: 100, ..FilterConfig::spf(n) };
    let (states, _) = transport(start.clone(), &target, &cfg)?;
    let set = ParticleSet::new(states)?;
    let coverage = mode_coverage(&set, target.means(), 1.5)?;
    let min_dist = set.min_pairwise_distance()?;

    let mut pf = FilterState::new(ParticleSet::new(start)?, FilterConfig::pf(n))?;
    let walk = RandomWalkModel::isotropic(1, 0.05)?;
    let z = DVector::zeros(0);
    let mut min_ess = f64::INFINITY;
    for _ in 0..5 {
        pf_step(&mut pf, &DVector::zeros(0), Some(&z), &walk, &target, &mut rng)?;
        min_ess = min_ess.min(pf.diagnostics.ess.unwrap_or(f64::INFINITY));
    }

    let pass = coverage.iter().all(|c| *c >= 0.3) && min_dist > 1e-4 && min_ess < 0.5 * n as f64;
    outcome(
        pass,
        format!(
            "SPF coverage {:.2}/{:.2} (>= 0.3), min distance {min_dist:.2e} (> 1e-4); PF min ESS {min_ess:.1} (< 25)",
            coverage[0], coverage[1]
        ),
    )
}

/// Gaussian with precision eigenvalues spread log-uniformly over `[1, kappa]`
/// in a random basis.
fn ill_conditioned(d: usize, kappa: f64, rng: &mut RngStream) -> Result<GaussianTarget> {
    let q = DMatrix::from_fn(d, d, |_, _| rng.standard_normal()).qr().q();
    let eig = DVector::from_fn(d, |i, _| kappa.powf(i as f64 / (d - 1) as f64));
    let precision = &q * DMatrix::from_diagonal(&eig) * q.transpose();
    GaussianTarget::new(rng.standard_normal_vector(d), precision)
}

/// First iteration whose mean log-density is within 1 nat of the final one,
/// or `None` if the trace diverged.
fn iterations_to_converge(trace: &[f64]) -> Option<usize> {
    let last = *trace.last()?;
    if !last.is_finite() {
        return None;
    }
    trace.iter().position(|v| (v - last).abs() <= 1.0)
}

fn ac6_second_order() -> Result<Outcome> {
    let (d, n) = (10, 50);
    let mut rng = RngStream::new(6).child(0, Purpose::Test);
    let target = ill_conditioned(d, 100.0, &mut rng)?;
    let start: Vec<StateVector> = (0..n).map(|_| rng.standard_normal_vector(d) * 3.0).collect();

    let spf = FilterConfig { eps: 0.5, iterations: 2000, ..FilterConfig::spf(n) };
    let (_, diag) = transport(start.clone(), &target, &spf)?;
    let spf_iters = iterations_to_converge(&diag.log_density_trace);

    // Plain SVGD, with the step size most favorable to it.
    let mut svgd_best: Option<(usize, f64)> = None;
    for eps in [0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5] {
        let cfg = FilterConfig {
            eps,
            iterations: 10_000,
            kernel: KernelChoice::IsotropicMedian,
            optimizer: OptimizerKind::Sgd,
            curvature_seed: false,
            ..FilterConfig::spf(n)
        };
        let Ok((_, diag)) = transport(start.clone(), &target, &cfg) else { continue };
        if let Some(it) = iterations_to_converge(&diag.log_density_trace) {
            if svgd_best.is_none_or(|(best, _)| it < best) {
                svgd_best = Some((it, eps));
            }
        }
    }
    let pass = matches!((spf_iters, svgd_best), (Some(a), Some((b, _))) if a as f64 <= 0.5 * b as f64);
    outcome(
        pass,
        format!(
            "iterations to within 1 nat: preconditioned {spf_iters:?}, SVGD best {:?} at eps {:?} (ratio <= 0.5)",
            svgd_best.map(|b| b.0),
            svgd_best.map(|b| b.1)
        ),
    )
}

fn ac7_global_localization() -> Result<Outcome> {
    let (_, summary) = run_scenario(&config("grid_global.json")?)?;
    let successes = |name: &str| summary.filter(name).and_then(|f| f.successes).unwrap_or(0);
    let (spf, pf) = (successes("SPF"), successes("PF"));
    outcome(spf >= 7 && pf < spf, format!("SPF {spf}/10 (>= 7), PF {pf}/10 (< SPF)"))
}

fn ac8_resampling() -> Result<Outcome> {
    let weight_sets: [&[f64]; 3] = [
        &[0.1, 0.2, 0.3, 0.4],
        &[0.05, 0.05, 0.4, 0.15, 0.35, 0.0, 0.0, 0.0],
        &[0.6, 0.1, 0.1, 0.1, 0.1],
    ];
    let worst = weight_sets
        .iter()
        .enumerate()
        .map(|(i, w)| resampling_count_deviation(w, 100_000, 100 + i as u64))
        .fold(0.0, f64::max);
    let mut rng = RngStream::new(8).child(0, Purpose::Resample);
    let mut misses = 0usize;
    for n in [1usize, 2, 7, 50, 101] {
        let uniform = vec![1.0 / n as f64; n];
        for _ in 0..200 {
            let idx = low_variance_resample(&uniform, &mut rng);
            misses += idx.iter().enumerate().filter(|(k, &i)| *k != i).count();
        }
    }
    outcome(
        worst <= 0.01 && misses == 0,
        format!("worst relative count deviation {worst:.4} (<= 0.01), uniform misses {misses}"),
    )
}

fn steps_csv(cfg: &ScenarioConfig) -> Result<Vec<u8>> {
    let (record, _) = run_scenario(cfg)?;
    let mut out = Vec::new();
    write_steps_csv(&record, &mut out)?;
    Ok(out)
}

fn ac9_determinism() -> Result<Outcome> {
    let mut detail = Vec::new();
    let mut pass = true;
    for name in ["sine_bank.json", "grid_track.json", "multimodal_track.json"] {
        let mut cfg = config(name)?;
        cfg.repeats = 2;
        cfg.horizon = cfg.horizon.min(10);
        let (a, b) = (steps_csv(&cfg)?, steps_csv(&cfg)?);
        pass &= a == b && !a.is_empty();
        detail.push(format!("{name} {}", if a == b { "identical" } else { "differs" }));
    }
    outcome(pass, detail.join(", "))
}

fn phi_hat_seconds(n: usize, d: usize) -> Result<f64> {
    let mut rng = RngStream::new(10).child(n as u64, Purpose::Test);
    let states: Vec<StateVector> = (0..n).map(|_| rng.standard_normal_vector(d)).collect();
    let scores: Vec<StateVector> = states.iter().map(|x| -x).collect();
    let gram = gram_and_grads(&states, &KernelSpec::isotropic(median_heuristic(&states)?)?)?;
    let mut best = f64::INFINITY;
    for _ in 0..200 {
        let start = Instant::now();
        std::hint::black_box(phi_hat(&scores, &gram)?);
        best = best.min(start.elapsed().as_secs_f64());
    }
    Ok(best)
}

fn ac10_complexity() -> Result<Outcome> {
    let d = 20;
    let ratio = phi_hat_seconds(100, d)? / phi_hat_seconds(50, d)?;

    let mut cfg = config("sine_bank.json")?;
    cfg.repeats = 2;
    cfg.horizon = 10;
    let mut overhead = Vec::new();
    for n in [20, 50] {
        for f in &mut cfg.filters {
            f.n = n;
        }
        cfg.filters.truncate(2);
        let (_, summary) = run_scenario(&cfg)?;
        let ms = |name: &str| summary.filter(name).map_or(f64::NAN, |f| f.median_ms_iteration);
        overhead.push(format!("N={n}: SPF {:.3} ms/iteration, PF {:.3} ms/step", ms("SPF"), ms("PF")));
    }
    outcome(
        (2.0..=6.0).contains(&ratio),
        format!("phi_hat time N=100 / N=50 at d={d}: {ratio:.2} (4 +/- 50%); {}", overhead.join("; ")),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Result<Outcome>); 10] = [
        ("AC1 kalman oracle", ac1_kalman_oracle),
        ("AC2 sine bank", ac2_sine_bank),
        ("AC3 stein identity", ac3_stein_identity),
        ("AC4 gradients", ac4_gradients),
        ("AC5 bimodal", ac5_bimodal),
        ("AC6 second order", ac6_second_order),
        ("AC7 global localization", ac7_global_localization),
        ("AC8 resampling", ac8_resampling),
        ("AC9 determinism", ac9_determinism),
        ("AC10 complexity", ac10_complexity),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(o) => {
                println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
                failed += usize::from(!o.pass);
            }
            Err(e) => {
                println!("FAIL {name}: error {e}");
                failed += 1;
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
