//! Scenario driver: simulates each repeat once, runs every configured filter
//! on it and assembles per-step rows and summaries.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Scenario, ScenarioConfig};
use super::scenarios::{hash_observations, Instance, StepEval};
use crate::error::{invalid, Error, Result};
use crate::filters::{filter_step, Algorithm, FilterConfig, FilterState};
use crate::metrics::{mean_std, quantiles};
use crate::particles::ParticleSet;
use crate::rng::{Purpose, RngStream};

/// One (repeat, t, filter) row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRow {
    pub repeat: usize,
    pub t: usize,
    pub filter: String,
    pub observed: bool,
    pub failed: bool,
    pub error: f64,
    pub rmse_to_date: f64,
    pub angle_error: f64,
    pub ess: f64,
    pub coverage: f64,
    pub estimate: Vec<f64>,
    pub ms_step: f64,
    pub ms_iteration: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunRecord {
    /// Ordered by (repeat, filter, t).
    pub rows: Vec<StepRow>,
    /// Truth trajectories per repeat, for plotting.
    pub truth: Vec<Vec<Vec<f64>>>,
    pub observation_hashes: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub name: String,
    pub n: usize,
    /// RMSE of the per-step error over time, mean and std across repeats.
    pub rmse_mean: f64,
    pub rmse_std: f64,
    /// 10% / 90% quantiles of the per-repeat RMSE.
    pub rmse_q10: f64,
    pub rmse_q90: f64,
    pub rmse_per_repeat: Vec<f64>,
    pub final_error_per_repeat: Vec<f64>,
    pub failed: usize,
    /// Repeats whose final error is within the scenario's success threshold.
    pub successes: Option<usize>,
    pub coverage_mean: Option<f64>,
    pub median_ms_step: f64,
    pub median_ms_iteration: f64,
    /// Linear scenario only: per repeat, per dimension RMSE of the gap to
    /// the Kalman mean.
    pub gap_rmse: Option<Vec<Vec<f64>>>,
    /// Linear scenario only: per repeat, per dimension final variance ratio.
    pub final_var_ratio: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub horizon: usize,
    pub repeats: usize,
    pub seed: u64,
    pub observation_hashes: Vec<u64>,
    /// Linear scenario only: steady-state Kalman std per dimension.
    pub steady_state_std: Option<Vec<f64>>,
    pub filters: Vec<FilterSummary>,
}

impl Summary {
    pub fn filter(&self, name: &str) -> Option<&FilterSummary> {
        self.filters.iter().find(|f| f.name == name)
    }
}

struct FilterRun {
    rows: Vec<StepRow>,
    evals: Vec<Option<StepEval>>,
    hash: u64,
    failed: bool,
}

fn run_filter(inst: &Instance, repeat: usize, index: usize, fc: &FilterConfig, rep: &RngStream) -> Result<FilterRun> {
    let mut init = rep.child(0, Purpose::Init);
    let mut rng = rep.child(index as u64, Purpose::Predict).child(fc.seed, Purpose::Predict);
    let particles = ParticleSet::new(inst.initial_particles(fc.n, &mut init))?;
    let mut state = FilterState::new(particles, fc.clone())?.with_angular(&inst.angular());
    let iterations = match fc.algorithm {
        Algorithm::Stein => fc.iterations.max(1),
        Algorithm::Particle { .. } => 1,
    };
    let horizon = inst.horizon();
    let mut rows = Vec::with_capacity(horizon);
    let mut evals = Vec::with_capacity(horizon);
    let mut consumed = Vec::with_capacity(horizon);
    let mut failed = false;
    let mut sq_sum = 0.0;
    for t in 1..=horizon {
        let z = inst.observations[t - 1].as_ref();
        consumed.push(z);
        let mut row = StepRow {
            repeat,
            t,
            filter: fc.name.clone(),
            observed: z.is_some(),
            failed: true,
            error: f64::NAN,
            rmse_to_date: f64::NAN,
            angle_error: f64::NAN,
            ess: f64::NAN,
            coverage: f64::NAN,
            estimate: vec![f64::NAN; inst.transition.state_dim()],
            ms_step: f64::NAN,
            ms_iteration: f64::NAN,
        };
        if !failed {
            let start = Instant::now();
            let res = filter_step(
                &mut state,
                &inst.controls[t - 1],
                z,
                inst.transition.as_ref(),
                inst.obs_models[t - 1].as_ref(),
                &mut rng,
            );
            let ms = start.elapsed().as_secs_f64() * 1e3;
            match res {
                Ok(()) => {
                    let eval = inst.evaluate(t, &state.particles);
                    sq_sum += eval.error * eval.error;
                    row.failed = false;
                    row.error = eval.error;
                    row.rmse_to_date = (sq_sum / t as f64).sqrt();
                    row.angle_error = eval.angle_error.unwrap_or(f64::NAN);
                    row.coverage = eval.coverage.unwrap_or(f64::NAN);
                    row.ess = state.diagnostics.ess.unwrap_or(state.particles.len() as f64);
                    row.estimate = eval.estimate.iter().copied().collect();
                    row.ms_step = ms;
                    row.ms_iteration = ms / iterations as f64;
                    evals.push(Some(eval));
                }
                Err(e) => {
                    log::warn!("repeat {repeat}: filter {} aborted at t={t}: {e}", fc.name);
                    failed = true;
                }
            }
        }
        if failed {
            evals.push(None);
        }
        rows.push(row);
    }
    Ok(FilterRun {
        rows,
        evals,
        hash: hash_observations(consumed.into_iter()),
        failed,
    })
}

struct RepeatOutcome {
    runs: Vec<FilterRun>,
    truth: Vec<Vec<f64>>,
    hash: u64,
    steady_state_var: Option<Vec<f64>>,
    success_threshold: Option<f64>,
}

fn run_repeat(cfg: &ScenarioConfig, repeat: usize) -> Result<RepeatOutcome> {
    let rep = RngStream::new(cfg.seed).child(repeat as u64, Purpose::Repeat);
    let inst = Instance::simulate(
        &cfg.scenario,
        cfg.horizon,
        &mut rep.child(0, Purpose::Truth),
        &mut rep.child(0, Purpose::Observation),
    )?;
    let runs: Vec<FilterRun> = cfg
        .filters
        .par_iter()
        .enumerate()
        .map(|(f, fc)| run_filter(&inst, repeat, f, fc, &rep))
        .collect::<Result<_>>()?;
    let hash = inst.observation_hash();
    if let Some(bad) = runs.iter().position(|r| r.hash != hash) {
        return Err(invalid(format!(
            "filter {} consumed a different observation sequence",
            cfg.filters[bad].name
        )));
    }
    Ok(RepeatOutcome {
        runs,
        truth: inst.truth.iter().map(|x| x.iter().copied().collect()).collect(),
        hash,
        steady_state_var: inst.steady_state_variance().map(|v| v.iter().copied().collect()),
        success_threshold: inst.success_threshold(),
    })
}

fn median(values: &[f64]) -> f64 {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    quantiles(&finite, &[0.5]).map(|q| q[0]).unwrap_or(f64::NAN)
}

fn summarize(cfg: &ScenarioConfig, outcomes: &[RepeatOutcome]) -> Summary {
    let filters = cfg
        .filters
        .iter()
        .enumerate()
        .map(|(f, fc)| {
            let mut rmse = Vec::new();
            let mut finals = Vec::new();
            let mut failed = 0;
            let mut successes = 0;
            let mut coverage = Vec::new();
            let mut ms_step = Vec::new();
            let mut ms_iter = Vec::new();
            let mut gap_rmse = Vec::new();
            let mut var_ratio = Vec::new();
            for o in outcomes {
                let run = &o.runs[f];
                ms_step.extend(run.rows.iter().map(|r| r.ms_step));
                ms_iter.extend(run.rows.iter().map(|r| r.ms_iteration));
                if run.failed {
                    failed += 1;
                    continue;
                }
                let evals: Vec<&StepEval> = run.evals.iter().flatten().collect();
                let e2 = evals.iter().map(|e| e.error * e.error).sum::<f64>() / evals.len() as f64;
                rmse.push(e2.sqrt());
                let last = evals.last().expect("horizon >= 1");
                finals.push(last.error);
                if o.success_threshold.is_some_and(|th| last.error <= th) {
                    successes += 1;
                }
                coverage.extend(evals.iter().filter_map(|e| e.coverage));
                if let Some(g0) = &evals[0].gap {
                    let d = g0.len();
                    let per_dim = (0..d)
                        .map(|i| (evals.iter().map(|e| e.gap.as_ref().unwrap()[i].powi(2)).sum::<f64>() / evals.len() as f64).sqrt())
                        .collect();
                    gap_rmse.push(per_dim);
                    var_ratio.push(last.var_ratio.as_ref().unwrap().iter().copied().collect());
                }
            }
            let (rmse_mean, rmse_std) = mean_std(&rmse);
            let q = quantiles(&rmse, &[0.1, 0.9]).unwrap_or_else(|_| vec![f64::NAN; 2]);
            let linear = matches!(cfg.scenario, Scenario::LingaussVerify(_));
            FilterSummary {
                name: fc.name.clone(),
                n: fc.n,
                rmse_mean,
                rmse_std,
                rmse_q10: q[0],
                rmse_q90: q[1],
                rmse_per_repeat: rmse,
                final_error_per_repeat: finals,
                failed,
                successes: outcomes.first().and_then(|o| o.success_threshold).map(|_| successes),
                coverage_mean: (!coverage.is_empty()).then(|| mean_std(&coverage).0),
                median_ms_step: median(&ms_step),
                median_ms_iteration: median(&ms_iter),
                gap_rmse: linear.then_some(gap_rmse),
                final_var_ratio: linear.then_some(var_ratio),
            }
        })
        .collect();
    Summary {
        scenario: cfg.scenario.name().into(),
        horizon: cfg.horizon,
        repeats: cfg.repeats,
        seed: cfg.seed,
        observation_hashes: outcomes.iter().map(|o| o.hash).collect(),
        steady_state_std: outcomes
            .first()
            .and_then(|o| o.steady_state_var.as_ref())
            .map(|v| v.iter().map(|x| x.sqrt()).collect()),
        filters,
    }
}

/// Runs every repeat (in parallel) and every filter on it. A filter that
/// aborts marks its repeat as failed; the run continues.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<(RunRecord, Summary)> {
    cfg.validate()?;
    let outcomes: Vec<RepeatOutcome> = (0..cfg.repeats)
        .into_par_iter()
        .map(|r| run_repeat(cfg, r))
        .collect::<Result<_>>()?;
    let summary = summarize(cfg, &outcomes);
    let mut record = RunRecord::default();
    for o in outcomes {
        record.observation_hashes.push(o.hash);
        record.truth.push(o.truth);
        for run in o.runs {
            record.rows.extend(run.rows);
        }
    }
    Ok((record, summary))
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v}")
    }
}

/// Per-step rows without timing, so that equal seeds give equal bytes.
pub fn write_steps_csv<W: Write>(record: &RunRecord, out: W) -> Result<()> {
    let dim = record.rows.first().map_or(0, |r| r.estimate.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["repeat", "t", "filter", "observed", "failed", "error", "rmse_to_date", "angle_error", "ess", "coverage"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..dim).map(|i| format!("est_{i}")));
    w.write_record(&header)?;
    for r in &record.rows {
        let mut rec = vec![
            r.repeat.to_string(),
            r.t.to_string(),
            r.filter.clone(),
            (r.observed as u8).to_string(),
            (r.failed as u8).to_string(),
            fmt(r.error),
            fmt(r.rmse_to_date),
            fmt(r.angle_error),
            fmt(r.ess),
            fmt(r.coverage),
        ];
        rec.extend(r.estimate.iter().map(|v| fmt(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timing_csv<W: Write>(record: &RunRecord, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["repeat", "t", "filter", "ms_step", "ms_iteration"])?;
    for r in &record.rows {
        w.write_record([r.repeat.to_string(), r.t.to_string(), r.filter.clone(), fmt(r.ms_step), fmt(r.ms_iteration)])?;
    }
    w.flush()?;
    Ok(())
}

/// Long format `series,repeat,t,metric,value` for gnuplot or vega. The truth
/// appears as series `truth`.
pub fn write_plot_csv<W: Write>(record: &RunRecord, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["series", "repeat", "t", "metric", "value"])?;
    for (repeat, traj) in record.truth.iter().enumerate() {
        for (k, x) in traj.iter().enumerate() {
            for (i, v) in x.iter().enumerate() {
                w.write_record(["truth".into(), repeat.to_string(), (k + 1).to_string(), format!("x_{i}"), fmt(*v)])?;
            }
        }
    }
    for r in &record.rows {
        let base = |m: String, v: f64| [r.filter.clone(), r.repeat.to_string(), r.t.to_string(), m, fmt(v)];
        w.write_record(base("error".into(), r.error))?;
        w.write_record(base("ess".into(), r.ess))?;
        if !r.coverage.is_nan() {
            w.write_record(base("coverage".into(), r.coverage))?;
        }
        for (i, v) in r.estimate.iter().enumerate() {
            w.write_record(base(format!("x_{i}"), *v))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `steps.csv`, `timing.csv`, `plot.csv` and `summary.json` to `dir`.
pub fn write_outputs(dir: &Path, record: &RunRecord, summary: &Summary) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_steps_csv(record, std::fs::File::create(dir.join("steps.csv"))?)?;
    write_timing_csv(record, std::fs::File::create(dir.join("timing.csv"))?)?;
    write_plot_csv(record, std::fs::File::create(dir.join("plot.csv"))?)?;
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(summary)?)?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    /// State dimension of the sine bank (two per function).
    Dimension,
    /// Particle count of every configured filter.
    ParticleCount,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dimension" => Ok(Self::Dimension),
            "particle-count" => Ok(Self::ParticleCount),
            _ => Err(Error::Config(format!("unknown sweep axis {s:?} (dimension | particle-count)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis_value: usize,
    pub filter: String,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub q10: f64,
    pub q90: f64,
    pub ms_per_step: f64,
}

/// Config for one axis value.
pub fn sweep_config(cfg: &ScenarioConfig, axis: SweepAxis, value: usize) -> Result<ScenarioConfig> {
    let mut c = cfg.clone();
    match axis {
        SweepAxis::Dimension => {
            let Scenario::SineBank(p) = &mut c.scenario else {
                return Err(Error::Config("the dimension axis needs the sine-bank scenario".into()));
            };
            if value < 2 || !value.is_multiple_of(2) {
                return Err(Error::Config(format!("dimension {value} must be even and >= 2")));
            }
            p.n_fns = value / 2;
        }
        SweepAxis::ParticleCount => {
            if value == 0 {
                return Err(Error::Config("particle count must be >= 1".into()));
            }
            c.filters.iter_mut().for_each(|f| f.n = value);
        }
    }
    c.validate()?;
    Ok(c)
}

/// One summary row per (value, filter), values in the given order.
pub fn sweep(cfg: &ScenarioConfig, axis: SweepAxis, values: &[usize]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one axis value".into()));
    }
    let mut rows = Vec::new();
    for &v in values {
        let (_, summary) = run_scenario(&sweep_config(cfg, axis, v)?)?;
        rows.extend(summary.filters.into_iter().map(|f| SweepRow {
            axis_value: v,
            filter: f.name,
            rmse_mean: f.rmse_mean,
            rmse_std: f.rmse_std,
            q10: f.rmse_q10,
            q90: f.rmse_q90,
            ms_per_step: f.median_ms_step,
        }));
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["axis_value", "filter", "rmse_mean", "rmse_std", "q10", "q90", "ms_per_step"])?;
    for r in rows {
        w.write_record([
            r.axis_value.to_string(),
            r.filter.clone(),
            fmt(r.rmse_mean),
            fmt(r.rmse_std),
            fmt(r.q10),
            fmt(r.q90),
            fmt(r.ms_per_step),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(scenario: &str, params: &str, filters: &str, horizon: usize, repeats: usize) -> ScenarioConfig {
        ScenarioConfig::from_json(&format!(
            r#"{{"scenario": "{scenario}", "params": {params}, "filters": {filters}, "horizon": {horizon}, "repeats": {repeats}, "seed": 3}}"#
        ))
        .unwrap()
    }

    #[test]
    fn row_count_and_order() {
        let cfg = small(
            "sine-bank",
            r#"{"n_fns": 2}"#,
            r#"[{"name": "SPF", "n": 8, "iterations": 3}, {"name": "PF", "n": 8, "algorithm": {"particle": {"resample": true}}}]"#,
            4,
            2,
        );
        let (rec, summary) = run_scenario(&cfg).unwrap();
        assert_eq!(rec.rows.len(), 2 * 4 * 2);
        let keys: Vec<(usize, &str, usize)> = rec.rows.iter().map(|r| (r.repeat, r.filter.as_str(), r.t)).collect();
        assert_eq!(keys[0], (0, "SPF", 1));
        assert_eq!(keys[4], (0, "PF", 1));
        assert_eq!(keys[8], (1, "SPF", 1));
        assert_eq!(summary.filters.len(), 2);
        assert_eq!(summary.filter("PF").unwrap().rmse_per_repeat.len(), 2);
    }

    #[test]
    fn steps_csv_is_deterministic() {
        let cfg = small("multimodal-track", "{}", r#"[{"name": "SPF", "n": 10, "iterations": 4}]"#, 5, 2);
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_steps_csv(&run_scenario(&cfg).unwrap().0, &mut a).unwrap();
        write_steps_csv(&run_scenario(&cfg).unwrap().0, &mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("repeat,t,filter,observed,failed,error,rmse_to_date,angle_error,ess,coverage,est_0"));
    }

    #[test]
    fn diverging_filter_is_marked_failed() {
        // A huge step makes the flow blow up; the run still completes.
        let cfg = small(
            "sine-bank",
            r#"{"n_fns": 1, "k": 50.0}"#,
            r#"[{"name": "wild", "n": 4, "eps": 1e300, "iterations": 5, "optimizer": {"kind": "sgd"}}, {"name": "PF", "n": 4, "algorithm": {"particle": {"resample": true}}}]"#,
            3,
            1,
        );
        let (rec, summary) = run_scenario(&cfg).unwrap();
        assert_eq!(rec.rows.len(), 6);
        let wild = summary.filter("wild").unwrap();
        assert_eq!(wild.failed, 1);
        assert!(rec.rows.iter().filter(|r| r.filter == "wild").all(|r| r.failed && r.error.is_nan()));
        assert_eq!(summary.filter("PF").unwrap().failed, 0);
    }

    #[test]
    fn single_value_sweep_matches_run() {
        let cfg = small("sine-bank", r#"{"n_fns": 2}"#, r#"[{"name": "PF", "n": 6, "algorithm": {"particle": {"resample": true}}}]"#, 3, 2);
        let rows = sweep(&cfg, SweepAxis::ParticleCount, &[6]).unwrap();
        let (_, summary) = run_scenario(&cfg).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].rmse_mean, summary.filters[0].rmse_mean);
        assert_eq!(rows[0].q10, summary.filters[0].rmse_q10);
    }

    #[test]
    fn dimension_axis_sets_function_count() {
        let cfg = small("sine-bank", "{}", r#"[{"name": "PF", "n": 6}]"#, 2, 1);
        let c = sweep_config(&cfg, SweepAxis::Dimension, 8).unwrap();
        let Scenario::SineBank(p) = &c.scenario else { panic!() };
        assert_eq!(p.n_fns, 4);
        assert!(sweep_config(&cfg, SweepAxis::Dimension, 7).is_err());
        assert!(sweep(&cfg, SweepAxis::Dimension, &[]).is_err());
    }
}
