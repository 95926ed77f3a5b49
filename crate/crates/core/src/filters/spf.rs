use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::config::{CurvatureSource, KernelChoice};
use super::reproject::reproject_to_leader;
use super::{Diagnostics, FilterConfig, FilterState, OptimizerState};
use crate::error::{invalid, Error, Result};
use crate::kernels::{gram_and_grads, median_heuristic, metric_from_curvature, KernelSpec};
use crate::models::{check_len, wrap_angle, ObservationModel, TransitionModel};
use crate::particles::{ControlInput, Observation, ParticleSet, StateVector};
use crate::rng::RngStream;
use crate::steinflow::{phi_hat, score_batch, PosteriorScore, PriorApprox, PriorKind};

/// Levenberg-Marquardt ridge added to the seed curvature, relative to its
/// mean diagonal. Bounds seed steps along weakly observed directions.
const SEED_RIDGE: f64 = 0.1;
/// Smallest mean diagonal used to scale the ridge.
const SEED_FLOOR: f64 = 1e-8;
/// History is dropped when the L-BFGS step is longer than this multiple of
/// the seed step, both measured in the seed curvature norm.
const RESTART_RATIO: f64 = 3.0;

/// Propagates every particle with one noise draw. Weights are dropped.
pub fn spf_predict(
    state: &mut FilterState,
    u: &ControlInput,
    transition: &dyn TransitionModel,
    rng: &mut RngStream,
) -> Result<()> {
    let d = state.particles.dim();
    if transition.state_dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: transition.state_dim(),
        });
    }
    let states = state
        .particles
        .states()
        .iter()
        .map(|x| transition.propagate(x, u, rng))
        .collect();
    state.particles = ParticleSet::new(states)?;
    state.angular = transition.angular_dims().to_vec();
    Ok(())
}

/// Moves the predicted particles along the preconditioned Stein flow for
/// `iterations` steps. Particles are never reweighted or resampled.
pub fn spf_update(state: &mut FilterState, z: &Observation, obs: &dyn ObservationModel) -> Result<()> {
    let d = state.particles.dim();
    if obs.state_dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: obs.state_dim(),
        });
    }
    state.reset_optimizers();
    let predicted = state.particles.states().to_vec();
    let prior = match state.config.prior {
        PriorKind::Flat => PriorApprox::Flat,
        PriorKind::Gaussian => PriorApprox::gaussian_fit(&predicted, &state.angular)?,
        PriorKind::Kde => {
            let spec = if predicted.len() > 1 {
                KernelSpec::isotropic(median_heuristic(&predicted)?)?
            } else {
                KernelSpec::isotropic(1.0)?
            };
            PriorApprox::kde(&predicted, spec)?
        }
    };
    let cfg = state.config.clone();
    let angular = state.angular.clone();
    let n = predicted.len();
    let previous = (state.log_likelihoods.len() == n).then(|| std::mem::take(&mut state.log_likelihoods));
    let outcome = run_flow(predicted, &mut state.optimizers, obs, z, &prior, &cfg, &angular, previous.as_deref())?;
    state.particles = ParticleSet::new(outcome.states)?;
    state.log_likelihoods = outcome.last.log_likelihoods;
    state.log_densities = outcome.last.log_densities;
    state.diagnostics = outcome.diagnostics;
    Ok(())
}

/// Prediction followed by an update. `z = None` skips the update.
pub fn spf_step(
    state: &mut FilterState,
    u: &ControlInput,
    z: Option<&Observation>,
    transition: &dyn TransitionModel,
    obs: &dyn ObservationModel,
    rng: &mut RngStream,
) -> Result<()> {
    state.reset_optimizers();
    spf_predict(state, u, transition, rng)?;
    state.step += 1;
    match z {
        Some(z) => spf_update(state, z, obs),
        None => {
            state.diagnostics = Diagnostics::default();
            Ok(())
        }
    }
}

/// Static flow toward `target` (observation ignored, flat prior). Returns the
/// final particles and the per-iteration diagnostics.
pub fn transport(
    states: Vec<StateVector>,
    target: &dyn ObservationModel,
    cfg: &FilterConfig,
) -> Result<(Vec<StateVector>, Diagnostics)> {
    cfg.validate()?;
    if states.len() != cfg.n {
        return Err(invalid("particle count does not match configuration"));
    }
    let dim = states.first().map_or(0, |x| x.len());
    let mut opts = vec![OptimizerState::fresh(cfg.optimizer, dim); states.len()];
    let z = DVector::zeros(0);
    let out = run_flow(states, &mut opts, target, &z, &PriorApprox::Flat, cfg, &[], None)?;
    Ok((out.states, out.diagnostics))
}

struct FlowOutcome {
    states: Vec<StateVector>,
    last: PosteriorScore,
    diagnostics: Diagnostics,
}

/// Initial L-BFGS curvature `B = w (C + P)` of one particle, with `C` the
/// Gauss-Newton curvature, `P` the prior precision and `w` the particle's
/// mean kernel weight, which scales the flow direction.
struct Seed {
    curvature: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

impl Seed {
    fn new(c: DMatrix<f64>, prior_precision: Option<&DMatrix<f64>>, w: f64) -> Option<Self> {
        let d = c.nrows();
        let mut b = c;
        if let Some(p) = prior_precision {
            b += p;
        }
        b = (&b + b.transpose()) * (0.5 * w);
        let scale = (b.trace() / d as f64).max(SEED_FLOOR);
        for i in 0..d {
            b[(i, i)] += SEED_RIDGE * scale;
        }
        let inverse = b.clone().cholesky()?.inverse();
        Some(Self { curvature: b, inverse })
    }

    /// Powell damping: keeps `s^T y >= 0.2 s^T B s`, so the update stays
    /// positive definite and within a bounded factor of the seed where the
    /// posterior is flat or not concave.
    fn damp(&self, s: &StateVector, y: StateVector) -> StateVector {
        let bs = &self.curvature * s;
        let sbs = s.dot(&bs);
        let sy = s.dot(&y);
        if sy >= 0.2 * sbs || sbs <= 0.0 {
            return y;
        }
        let theta = 0.8 * sbs / (sbs - sy);
        y * theta + bs * (1.0 - theta)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn run_flow(
    mut states: Vec<StateVector>,
    optimizers: &mut [OptimizerState],
    obs: &dyn ObservationModel,
    z: &Observation,
    prior: &PriorApprox,
    cfg: &FilterConfig,
    angular: &[usize],
    previous: Option<&[f64]>,
) -> Result<FlowOutcome> {
    let n = states.len();
    let d = states[0].len();
    for x in &states {
        check_len(x, d, "particle")?;
    }
    let mut diag = Diagnostics {
        updated: true,
        ..Diagnostics::default()
    };

    // The anisotropic metric is fixed for the whole update and built from the
    // predicted particles.
    let fixed_kernel = match cfg.kernel {
        KernelChoice::HessianScaled => {
            let curvatures: Option<Vec<_>> = states.par_iter().map(|x| obs.curvature(x, z)).collect();
            match curvatures {
                Some(c) => {
                    let mut m = metric_from_curvature(&c)?;
                    if let Some(p) = prior.precision() {
                        m += p;
                    }
                    Some(KernelSpec::anisotropic(m)?)
                }
                None => None,
            }
        }
        KernelChoice::IsotropicMedian => None,
    };
    let wants_seed = cfg.curvature_seed && matches!(optimizers.first(), Some(OptimizerState::Lbfgs(_)));

    let mut prev_grad: Option<Vec<StateVector>> = None;
    let mut last_steps: Vec<StateVector> = vec![DVector::zeros(d); n];
    for iteration in 0..cfg.iterations {
        let mut scores = score_batch(&states, obs, prior, z, None)?;
        diag.log_density_trace.push(mean(&scores.log_densities));
        diag.reprojected = 0;
        if let (Some(rcfg), Some(previous)) = (&cfg.reprojection, previous) {
            let plan = reproject_to_leader(&states, previous, obs, z, rcfg);
            if !plan.is_noop() {
                diag.reprojected = plan.flagged();
                let guided = score_batch(&states, obs, prior, z, Some(&plan.anchors))?;
                scores.scores = guided.scores;
            }
        }

        let spec = match &fixed_kernel {
            Some(k) => k.clone(),
            None if n > 1 => KernelSpec::isotropic(median_heuristic(&states)?)?,
            None => KernelSpec::isotropic(1.0)?,
        };
        let gram = gram_and_grads(&states, &spec)?;
        let phi = phi_hat(&scores.scores, &gram)?;
        diag.mean_phi_norm = phi.mean_norm();

        let grads = match cfg.curvature_source {
            CurvatureSource::Flow => phi.directions.clone(),
            CurvatureSource::Score => scores.scores.clone(),
        };
        let seeds: Option<Vec<Option<Seed>>> = if wants_seed {
            states
                .par_iter()
                .enumerate()
                .map(|(l, x)| {
                    obs.curvature(x, z).map(|c| {
                        let w = match cfg.curvature_source {
                            CurvatureSource::Flow => gram.k.column(l).sum() / n as f64,
                            CurvatureSource::Score => 1.0,
                        };
                        Seed::new(c, prior.precision(), w)
                    })
                })
                .collect()
        } else {
            None
        };

        let steps: Vec<Result<StateVector>> = states
            .par_iter_mut()
            .zip(optimizers.par_iter_mut())
            .zip(last_steps.par_iter_mut())
            .enumerate()
            .map(|(j, ((x, opt), last))| {
                let step = match opt {
                    OptimizerState::Lbfgs(h) => {
                        let seed = seeds.as_ref().and_then(|s| s[j].as_ref());
                        if let Some(prev) = &prev_grad {
                            let y = -(&grads[j] - &prev[j]);
                            let y = match seed {
                                Some(sd) => sd.damp(last, y),
                                None => y,
                            };
                            h.insert(last.clone(), y);
                        }
                        h.set_seed(seed.map(|sd| sd.inverse.clone()));
                        let mut dir = h.direction(&phi.directions[j]);
                        if let Some(sd) = seed {
                            let seeded = &sd.inverse * &phi.directions[j];
                            let seeded_norm = seeded.dot(&phi.directions[j]);
                            if dir.dot(&(&sd.curvature * &dir)) > RESTART_RATIO * RESTART_RATIO * seeded_norm {
                                h.restart();
                                dir = seeded;
                            }
                        }
                        dir * cfg.eps
                    }
                    OptimizerState::Adam(a) => a.step(&phi.directions[j]),
                    OptimizerState::Sgd => &phi.directions[j] * cfg.eps,
                };
                *x += &step;
                for &a in angular {
                    x[a] = wrap_angle(x[a]);
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Diverged { particle: j, iteration });
                }
                *last = step.clone();
                Ok(step)
            })
            .collect();
        for s in steps {
            s?;
        }
        prev_grad = Some(grads);
    }

    let last = score_batch(&states, obs, prior, z, None)?;
    diag.log_density_trace.push(mean(&last.log_densities));
    diag.out_of_bounds = last.out_of_bounds;
    diag.rejected_pairs = optimizers
        .iter()
        .map(|o| match o {
            OptimizerState::Lbfgs(h) => h.rejected(),
            _ => 0,
        })
        .sum();
    Ok(FlowOutcome {
        states,
        last,
        diagnostics: diag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;
    use crate::models::{GaussianMixtureTarget, GaussianTarget, LinearGaussianModel, RandomWalkModel};
    use crate::optimizers::{LbfgsHistory, OptimizerKind};
    use nalgebra::{dvector, DMatrix};

    fn gaussian_cloud(n: usize, d: usize, seed: u64) -> Vec<StateVector> {
        let mut rng = RngStream::new(seed);
        (0..n).map(|_| rng.standard_normal_vector(d)).collect()
    }

    fn state(states: Vec<StateVector>, cfg: FilterConfig) -> FilterState {
        FilterState::new(ParticleSet::new(states).unwrap(), cfg).unwrap()
    }

    #[test]
    fn conjugate_update() {
        let model = LinearGaussianModel::scalar(1.0, 1.0).unwrap();
        let mut cfg = FilterConfig::spf(200);
        cfg.iterations = 30;
        cfg.eps = 0.5;
        let mut s = state(gaussian_cloud(200, 1, 1), cfg);
        spf_update(&mut s, &dvector![1.0], &model).unwrap();
        let (m, c) = s.particles.mean_cov();
        assert!((m[0] - 0.5).abs() <= 0.05, "mean {}", m[0]);
        assert!((c[(0, 0)] - 0.5).abs() <= 0.1, "var {}", c[(0, 0)]);
    }

    struct NoInfo;

    impl ObservationModel for NoInfo {
        fn state_dim(&self) -> usize {
            1
        }
        fn log_likelihood(&self, _x: &StateVector, _z: &Observation) -> f64 {
            0.0
        }
        fn score(&self, _x: &StateVector, _z: &Observation) -> StateVector {
            DVector::zeros(1)
        }
    }

    #[test]
    fn flat_likelihood_keeps_prior() {
        let mut cfg = FilterConfig::spf(100);
        cfg.eps = 0.5;
        let cloud = gaussian_cloud(100, 1, 2);
        let prior_mean = ParticleSet::new(cloud.clone()).unwrap().mean_cov().0[0];
        let mut s = state(cloud, cfg);
        spf_update(&mut s, &dvector![0.0], &NoInfo).unwrap();
        assert!((s.particles.mean_cov().0[0] - prior_mean).abs() <= 0.05);
        assert!(s.particles.min_pairwise_distance().unwrap() > 0.0);
    }

    #[test]
    fn bimodal_coverage() {
        let target = GaussianMixtureTarget::symmetric_bimodal(2.0, 0.5).unwrap();
        let mut cfg = FilterConfig::spf(50);
        cfg.iterations = 100;
        cfg.eps = 0.5;
        let cloud: Vec<_> = gaussian_cloud(50, 1, 3).into_iter().map(|x| x * 1.5).collect();
        let mut s = state(cloud, cfg);
        spf_update(&mut s, &DVector::zeros(0), &target).unwrap();
        let cov = crate::metrics::mode_coverage(&s.particles, target.means(), 1.5).unwrap();
        assert!(cov.iter().all(|c| *c >= 0.3), "{cov:?}");
        assert!(s.particles.min_pairwise_distance().unwrap() > 1e-4);
    }

    #[test]
    fn zero_step_is_prediction_only() {
        let model = RandomWalkModel::isotropic(2, 0.3).unwrap();
        let target = GaussianTarget::standard(2);
        let mut cfg = FilterConfig::spf(20);
        cfg.iterations = 1;
        cfg.eps = f64::MIN_POSITIVE;
        let cloud = gaussian_cloud(20, 2, 4);
        let mut a = state(cloud.clone(), cfg.clone());
        let mut b = state(cloud, cfg);
        let u = DVector::zeros(0);
        spf_step(&mut a, &u, Some(&DVector::zeros(0)), &model, &target, &mut RngStream::new(9)).unwrap();
        spf_predict(&mut b, &u, &model, &mut RngStream::new(9)).unwrap();
        for (x, y) in a.particles.states().iter().zip(b.particles.states()) {
            assert!((x - y).norm() < 1e-200);
        }
    }

    #[test]
    fn single_particle_is_gradient_ascent() {
        let target = GaussianTarget::new(dvector![1.0, -2.0], DMatrix::from_row_slice(2, 2, &[3.0, 0.5, 0.5, 1.0])).unwrap();
        let z = DVector::zeros(0);
        let x0 = dvector![0.2, 0.4];
        for opt in [OptimizerKind::Sgd, OptimizerKind::Lbfgs { m: 5 }] {
            let mut cfg = FilterConfig::spf(1);
            cfg.optimizer = opt;
            cfg.iterations = 8;
            cfg.eps = 0.1;
            cfg.prior = PriorKind::Flat;
            cfg.curvature_seed = false;
            let mut s = state(vec![x0.clone()], cfg.clone());
            spf_update(&mut s, &z, &target).unwrap();

            let mut x = x0.clone();
            let mut h = LbfgsHistory::new(5);
            let mut prev: Option<(StateVector, StateVector)> = None;
            for _ in 0..8 {
                let g = target.score(&x, &z);
                let step = match opt {
                    OptimizerKind::Sgd => &g * 0.1,
                    _ => {
                        if let Some((s_prev, g_prev)) = &prev {
                            h.insert(s_prev.clone(), -(&g - g_prev));
                        }
                        h.direction(&g) * 0.1
                    }
                };
                x += &step;
                prev = Some((step, g));
            }
            assert!((&s.particles.states()[0] - &x).norm() < 1e-12, "{opt:?}");
        }
    }

    #[test]
    fn lineage_is_index_stable() {
        let target = GaussianTarget::standard(2);
        let mut cfg = FilterConfig::spf(30);
        cfg.eps = 1e-3;
        cfg.iterations = 3;
        let cloud = gaussian_cloud(30, 2, 5);
        let mut s = state(cloud.clone(), cfg);
        spf_update(&mut s, &DVector::zeros(0), &target).unwrap();
        assert_eq!(s.particles.len(), 30);
        // A small deformation keeps every output nearest to its own input.
        for (j, x) in s.particles.states().iter().enumerate() {
            let nearest = (0..cloud.len())
                .min_by(|&a, &b| (x - &cloud[a]).norm().total_cmp(&(x - &cloud[b]).norm()))
                .unwrap();
            assert_eq!(nearest, j);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let target = GaussianTarget::new(dvector![0.0], DMatrix::from_element(1, 1, 1e200)).unwrap();
        let mut cfg = FilterConfig::spf(2);
        cfg.optimizer = OptimizerKind::Sgd;
        cfg.prior = PriorKind::Flat;
        cfg.eps = 1e200;
        let mut s = state(vec![dvector![1.0], dvector![2.0]], cfg);
        assert!(matches!(
            spf_update(&mut s, &DVector::zeros(0), &target),
            Err(Error::Diverged { .. }) | Err(Error::NonFiniteScore { .. })
        ));
    }

    #[test]
    fn deterministic_runs() {
        let model = LinearGaussianModel::constant_velocity_2d(0.2, 0.5).unwrap();
        let run = || {
            let mut rng = RngStream::new(77);
            let mut s = state(gaussian_cloud(40, 4, 6), FilterConfig::spf(40));
            let u = DVector::zeros(0);
            for t in 0..5 {
                let z = dvector![t as f64 * 0.3, -0.1];
                spf_step(&mut s, &u, Some(&z), &model, &model, &mut rng).unwrap();
            }
            s.particles.into_states()
        };
        let a = run();
        let b = run();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.as_slice(), y.as_slice());
        }
    }

    #[test]
    fn seed_damping_bounds_curvature() {
        let c = DMatrix::from_diagonal(&dvector![4.0, 1.0]);
        let sd = Seed::new(c, None, 0.5).unwrap();
        let s = dvector![1.0, 1.0];
        let bs = &sd.curvature * &s;
        // Negative curvature is pulled up to the 0.2 floor.
        let y = sd.damp(&s, dvector![-1.0, 0.0]);
        assert!((s.dot(&y) - 0.2 * s.dot(&bs)).abs() < 1e-12);
        // Sufficient curvature passes unchanged.
        let y = sd.damp(&s, bs.clone());
        assert_eq!(y, bs);
        assert!((&sd.curvature * &sd.inverse - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn sine_bank_flow_matches_the_signal_from_a_wide_prior() {
        let model = crate::models::SineBankModel::new(3, 1.0, 0.1).unwrap().at_time(0.5);
        let truth = dvector![2.0, 0.3, 1.0, 2.0, 4.0, 5.0];
        let z = model.signal(&truth);
        let mut rng = RngStream::new(3);
        let cloud: Vec<StateVector> = (0..30)
            .map(|_| dvector![
                rng.uniform_range(0.5, 5.0), rng.uniform_range(0.0, TAU),
                rng.uniform_range(0.5, 5.0), rng.uniform_range(0.0, TAU),
                rng.uniform_range(0.5, 5.0), rng.uniform_range(0.0, TAU)
            ])
            .collect();
        let gap = |states: &[StateVector]| {
            let mean = states.iter().map(|x| model.signal(x)).sum::<DVector<f64>>() / states.len() as f64;
            (mean - &z).norm()
        };
        let before = gap(&cloud);
        let mut cfg = FilterConfig::spf(30);
        cfg.iterations = 40;
        let mut s = state(cloud, cfg);
        spf_update(&mut s, &z, &model).unwrap();
        let after = gap(s.particles.states());
        assert!(after < 0.3 && after < 0.2 * before, "{before} -> {after}");
    }
}
