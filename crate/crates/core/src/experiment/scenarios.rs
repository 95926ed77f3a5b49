//! Ground-truth simulation, particle initialization and per-step scoring for
//! each scenario.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector2};

use super::config::{GridParams, LinGaussModel, LinGaussParams, MultimodalParams, Rect, Scenario, SineParams};
use super::maps::two_room_map;
use crate::error::Result;
use crate::models::{
    wrap_angle, BeamModel, BeamScan, ConstantVelocityModel, GridMap2D, LinearGaussianModel, ObservationModel,
    PlanarPoseModel, RandomWalkModel, ScannerModel, SineBankModel, TransitionModel,
};
use crate::particles::{ControlInput, Observation, ParticleSet, StateVector};
use crate::rng::RngStream;

/// One simulated episode plus the models the filters run with.
pub struct Instance {
    pub transition: Arc<dyn TransitionModel>,
    /// Observation model for steps `1..=T` (index `t - 1`).
    pub obs_models: Vec<Arc<dyn ObservationModel>>,
    pub x0: StateVector,
    pub truth: Vec<StateVector>,
    pub controls: Vec<ControlInput>,
    pub observations: Vec<Option<Observation>>,
    kind: Kind,
}

enum Kind {
    LinGauss {
        model: Arc<LinearGaussianModel>,
        p0: DMatrix<f64>,
        kalman: Vec<(DVector<f64>, DMatrix<f64>)>,
    },
    Multimodal {
        radius: f64,
        pos_std: f64,
        vel_std: f64,
    },
    Sine {
        bank: SineBankModel,
        params: SineParams,
    },
    Grid {
        map: Arc<GridMap2D>,
        global: bool,
        params: GridParams,
    },
}

/// Scores of one filter's particle set at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepEval {
    pub estimate: StateVector,
    pub error: f64,
    pub angle_error: Option<f64>,
    pub coverage: Option<f64>,
    /// Per-dimension gap to the exact posterior mean, where one exists.
    pub gap: Option<DVector<f64>>,
    /// Per-dimension particle variance over the exact posterior variance.
    pub var_ratio: Option<DVector<f64>>,
}

impl Instance {
    pub fn simulate(scenario: &Scenario, horizon: usize, truth_rng: &mut RngStream, obs_rng: &mut RngStream) -> Result<Self> {
        match scenario {
            Scenario::LingaussVerify(p) => lingauss(p, horizon, truth_rng, obs_rng),
            Scenario::MultimodalTrack(p) => multimodal(p, horizon, truth_rng, obs_rng),
            Scenario::SineBank(p) => sine(p, horizon, truth_rng, obs_rng),
            Scenario::GridLocalizeGlobal(p) => grid(p, true, horizon, truth_rng, obs_rng),
            Scenario::GridLocalizeTrack(p) => grid(p, false, horizon, truth_rng, obs_rng),
        }
    }

    pub fn horizon(&self) -> usize {
        self.truth.len()
    }

    pub fn angular(&self) -> Vec<usize> {
        self.transition.angular_dims().to_vec()
    }

    pub fn observation_hash(&self) -> u64 {
        hash_observations(self.observations.iter().map(Option::as_ref))
    }

    pub fn initial_particles(&self, n: usize, rng: &mut RngStream) -> Vec<StateVector> {
        match &self.kind {
            Kind::LinGauss { p0, .. } => {
                let l = p0.clone().cholesky().expect("prior covariance is positive definite").l();
                (0..n).map(|_| &l * rng.standard_normal_vector(p0.nrows())).collect()
            }
            Kind::Multimodal { pos_std, vel_std, .. } => (0..n)
                .map(|_| {
                    let x = &self.x0;
                    DVector::from_vec(vec![
                        x[0] + rng.normal(0.0, *pos_std),
                        x[1] + rng.normal(0.0, *pos_std),
                        x[2] + rng.normal(0.0, *vel_std),
                        x[3] + rng.normal(0.0, *vel_std),
                    ])
                })
                .collect(),
            Kind::Sine { params, .. } => (0..n).map(|_| sine_prior_sample(params, rng)).collect(),
            Kind::Grid { map, global, params } => {
                let free: Vec<(usize, usize)> = map.free_cells();
                (0..n)
                    .map(|_| {
                        if *global {
                            let (cx, cy) = free[rng.index(free.len())];
                            let c = map.cell_center(cx, cy);
                            let r = map.resolution();
                            DVector::from_vec(vec![
                                c.x + rng.uniform_range(-0.5, 0.5) * r,
                                c.y + rng.uniform_range(-0.5, 0.5) * r,
                                rng.uniform_range(-std::f64::consts::PI, std::f64::consts::PI),
                            ])
                        } else {
                            let x = &self.x0;
                            DVector::from_vec(vec![
                                x[0] + rng.normal(0.0, params.init_std_xy),
                                x[1] + rng.normal(0.0, params.init_std_xy),
                                wrap_angle(x[2] + rng.normal(0.0, params.init_std_theta)),
                            ])
                        }
                    })
                    .collect()
            }
        }
    }

    /// Scores the particle set after step `t` (1-based).
    pub fn evaluate(&self, t: usize, particles: &ParticleSet) -> StepEval {
        let truth = &self.truth[t - 1];
        match &self.kind {
            Kind::LinGauss { kalman, .. } => {
                let (mean, cov) = particles.mean_cov();
                let (km, kc) = &kalman[t - 1];
                let gap = &mean - km;
                let var_ratio = DVector::from_iterator(mean.len(), (0..mean.len()).map(|i| cov[(i, i)] / kc[(i, i)]));
                StepEval {
                    error: gap.norm(),
                    estimate: mean,
                    angle_error: None,
                    coverage: None,
                    gap: Some(gap),
                    var_ratio: Some(var_ratio),
                }
            }
            Kind::Multimodal { radius, .. } => {
                let (mean, _) = particles.mean_cov();
                let pos = |x: &StateVector| Vector2::new(x[0], x[1]);
                let tp = pos(truth);
                let inside: f64 = (0..particles.len())
                    .filter(|&j| (pos(&particles.states()[j]) - tp).norm() <= *radius)
                    .map(|j| particles.weight(j))
                    .fold(0.0, |a, w| a + w);
                StepEval {
                    error: (pos(&mean) - tp).norm(),
                    estimate: mean,
                    angle_error: None,
                    coverage: Some(inside),
                    gap: None,
                    var_ratio: None,
                }
            }
            Kind::Sine { bank, .. } => {
                let at = bank.at_time(t as f64);
                let mut predicted = DVector::zeros(bank.n_fns());
                for (j, x) in particles.states().iter().enumerate() {
                    predicted.axpy(particles.weight(j), &at.signal(x), 1.0);
                }
                let (mean, _) = particles.mean_cov();
                StepEval {
                    error: (predicted - at.signal(truth)).norm(),
                    estimate: mean,
                    angle_error: None,
                    coverage: None,
                    gap: None,
                    var_ratio: None,
                }
            }
            Kind::Grid { map, params, .. } => {
                let est = cluster_pose_estimate(particles, 2.0 * map.resolution());
                let pos_err = Vector2::new(est[0] - truth[0], est[1] - truth[1]).norm();
                let radius = params.success_cells * map.resolution();
                let inside: f64 = (0..particles.len())
                    .filter(|&j| {
                        let x = &particles.states()[j];
                        Vector2::new(x[0] - truth[0], x[1] - truth[1]).norm() <= radius
                    })
                    .map(|j| particles.weight(j))
                    .fold(0.0, |a, w| a + w);
                StepEval {
                    error: pos_err,
                    angle_error: Some(wrap_angle(est[2] - truth[2]).abs()),
                    estimate: est,
                    coverage: Some(inside),
                    gap: None,
                    var_ratio: None,
                }
            }
        }
    }

    /// Final-step error threshold counted as a successful run, if the
    /// scenario defines one.
    pub fn success_threshold(&self) -> Option<f64> {
        match &self.kind {
            Kind::Grid { map, params, .. } => Some(params.success_cells * map.resolution()),
            _ => None,
        }
    }

    /// Steady-state posterior variance per dimension for the linear scenario.
    pub fn steady_state_variance(&self) -> Option<DVector<f64>> {
        match &self.kind {
            Kind::LinGauss { model, p0, .. } => Some(model.steady_state_covariance(p0).ok()?.diagonal()),
            _ => None,
        }
    }
}

/// FNV-1a hash of an observation sequence; missing steps hash as a marker
/// byte.
pub fn hash_observations<'a>(zs: impl Iterator<Item = Option<&'a Observation>>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |b: u8| {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    };
    for z in zs {
        match z {
            None => eat(0),
            Some(z) => {
                eat(1);
                for v in z.iter() {
                    v.to_bits().to_le_bytes().into_iter().for_each(&mut eat);
                }
            }
        }
    }
    h
}

/// Pose estimate from the densest cluster: the particle with the most
/// neighbours within `radius` (lowest index on ties), then the weighted mean
/// of those neighbours with a circular mean for the heading.
pub fn cluster_pose_estimate(p: &ParticleSet, radius: f64) -> StateVector {
    let s = p.states();
    let near = |a: &StateVector, b: &StateVector| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt() <= radius;
    let mut best = (0usize, f64::NEG_INFINITY);
    for j in 0..s.len() {
        let mass: f64 = (0..s.len()).filter(|&k| near(&s[j], &s[k])).map(|k| p.weight(k)).sum();
        if mass > best.1 {
            best = (j, mass);
        }
    }
    let center = &s[best.0];
    let (mut x, mut y, mut sn, mut cs, mut w) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for k in 0..s.len() {
        if near(center, &s[k]) {
            let wk = p.weight(k);
            x += wk * s[k][0];
            y += wk * s[k][1];
            sn += wk * s[k][2].sin();
            cs += wk * s[k][2].cos();
            w += wk;
        }
    }
    DVector::from_vec(vec![x / w, y / w, sn.atan2(cs)])
}

fn lingauss(p: &LinGaussParams, horizon: usize, truth_rng: &mut RngStream, obs_rng: &mut RngStream) -> Result<Instance> {
    let model = match p.model {
        LinGaussModel::Scalar => LinearGaussianModel::scalar(p.q, p.r)?,
        LinGaussModel::Cv2d => LinearGaussianModel::constant_velocity_2d(p.sigma_a, p.sigma_z)?,
    };
    let d = model.transition_matrix().nrows();
    let p0 = DMatrix::identity(d, d) * (p.init_std * p.init_std);
    let x0 = truth_rng.standard_normal_vector(d) * p.init_std;
    let u = DVector::zeros(0);
    let (mut truth, mut observations, mut kalman) = (Vec::new(), Vec::new(), Vec::new());
    let (mut m, mut c) = (DVector::zeros(d), p0.clone());
    let mut x = x0.clone();
    for _ in 0..horizon {
        x = model.propagate(&x, &u, truth_rng);
        let z = model.sample_observation(&x, obs_rng);
        (m, c) = model.kalman_step(&m, &c, &u, &z)?;
        kalman.push((m.clone(), c.clone()));
        truth.push(x.clone());
        observations.push(Some(z));
    }
    let model = Arc::new(model);
    Ok(Instance {
        transition: model.clone(),
        obs_models: vec![model.clone() as Arc<dyn ObservationModel>; horizon],
        x0,
        controls: vec![u; horizon],
        truth,
        observations,
        kind: Kind::LinGauss { model, p0, kalman },
    })
}

fn blocked(a: Vector2<f64>, b: Vector2<f64>, r: &Rect) -> bool {
    // Liang-Barsky clip of the segment a-b against the rectangle.
    let d = b - a;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (p, q) in [
        (-d.x, a.x - r.x0),
        (d.x, r.x1 - a.x),
        (-d.y, a.y - r.y0),
        (d.y, r.y1 - a.y),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
        } else {
            let t = q / p;
            if p < 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

/// Whether the segment from `a` to `b` passes through any obstacle.
pub fn occluded(a: Vector2<f64>, b: Vector2<f64>, obstacles: &[Rect]) -> bool {
    obstacles.iter().any(|r| blocked(a, b, r))
}

fn multimodal(p: &MultimodalParams, horizon: usize, truth_rng: &mut RngStream, obs_rng: &mut RngStream) -> Result<Instance> {
    let cv = Arc::new(ConstantVelocityModel::new(p.sigma_a)?);
    let origin = Vector2::new(p.scanner[0], p.scanner[1]);
    let scanner = Arc::new(ScannerModel::new(origin, p.sigma_z, 4)?);
    let x0 = DVector::from_vec(vec![p.start[0], p.start[1], p.velocity[0], p.velocity[1]]);
    let u = DVector::zeros(0);
    let (mut truth, mut observations) = (Vec::new(), Vec::new());
    let mut x = x0.clone();
    for _ in 0..horizon {
        x = cv.propagate(&x, &u, truth_rng);
        let pos = Vector2::new(x[0], x[1]);
        // Draw the noise either way so the stream does not depend on visibility.
        let z = scanner.sample_reading(pos, obs_rng);
        observations.push((!occluded(origin, pos, &p.obstacles)).then_some(z));
        truth.push(x.clone());
    }
    Ok(Instance {
        transition: cv,
        obs_models: vec![scanner as Arc<dyn ObservationModel>; horizon],
        x0,
        controls: vec![u; horizon],
        truth,
        observations,
        kind: Kind::Multimodal {
            radius: p.coverage_radius,
            pos_std: p.init_pos_std,
            vel_std: p.init_vel_std,
        },
    })
}

fn sine_prior_sample(p: &SineParams, rng: &mut RngStream) -> StateVector {
    DVector::from_iterator(
        2 * p.n_fns,
        (0..2 * p.n_fns).map(|i| {
            let r = if i % 2 == 0 { p.amplitude } else { p.phase };
            rng.uniform_range(r[0], r[1])
        }),
    )
}

fn sine(p: &SineParams, horizon: usize, truth_rng: &mut RngStream, obs_rng: &mut RngStream) -> Result<Instance> {
    let bank = SineBankModel::new(p.n_fns, p.k, p.sigma_z)?;
    let walk = Arc::new(RandomWalkModel::isotropic(2 * p.n_fns, p.process_std)?);
    let x0 = sine_prior_sample(p, truth_rng);
    let u = DVector::zeros(0);
    let (mut truth, mut observations, mut models) = (Vec::new(), Vec::new(), Vec::new());
    let mut x = x0.clone();
    for t in 1..=horizon {
        x = walk.propagate(&x, &u, truth_rng);
        let at = bank.at_time(t as f64);
        observations.push(Some(at.sample_observation(&x, obs_rng)));
        models.push(Arc::new(at) as Arc<dyn ObservationModel>);
        truth.push(x.clone());
    }
    Ok(Instance {
        transition: walk,
        obs_models: models,
        x0,
        controls: vec![u; horizon],
        truth,
        observations,
        kind: Kind::Sine {
            bank,
            params: p.clone(),
        },
    })
}

fn grid(p: &GridParams, global: bool, horizon: usize, truth_rng: &mut RngStream, obs_rng: &mut RngStream) -> Result<Instance> {
    let map = Arc::new(match &p.map_file {
        Some(path) => GridMap2D::load(path)?,
        None => two_room_map(),
    });
    let res = map.resolution();
    let truth_model = PlanarPoseModel::new(p.truth_noise_xy * res, p.truth_noise_theta)?;
    let filter_model = Arc::new(PlanarPoseModel::new(p.motion_noise_xy * res, p.motion_noise_theta)?);
    let beams = Arc::new(BeamModel::new(map.clone(), p.beam_sigma * res)?);

    let roomy: Vec<(usize, usize)> = map
        .free_cells()
        .into_iter()
        .filter(|&(cx, cy)| map.cell_distance(cx, cy) >= 3.0 * res)
        .collect();
    let (cx, cy) = roomy[truth_rng.index(roomy.len())];
    let c = map.cell_center(cx, cy);
    let x0 = DVector::from_vec(vec![c.x, c.y, truth_rng.uniform_range(-std::f64::consts::PI, std::f64::consts::PI)]);

    let clear = |x: &StateVector| map.distance(Vector2::new(x[0], x[1])) >= res && map.contains(Vector2::new(x[0], x[1]));
    let (mut truth, mut controls, mut observations) = (Vec::new(), Vec::new(), Vec::new());
    let mut x = x0.clone();
    for _ in 0..horizon {
        let ahead = map
            .ray_cast(Vector2::new(x[0], x[1]), x[2], (p.speed + 3.0) * res)
            .is_some();
        let u = if ahead {
            DVector::from_vec(vec![0.0, 0.6])
        } else {
            DVector::from_vec(vec![p.speed * res, truth_rng.uniform_range(-0.1, 0.1)])
        };
        let mut next = None;
        for _ in 0..10 {
            let cand = truth_model.propagate(&x, &u, truth_rng);
            if clear(&cand) {
                next = Some(cand);
                break;
            }
        }
        x = next.unwrap_or_else(|| {
            let mut turned = x.clone();
            turned[2] = wrap_angle(turned[2] + 0.6);
            turned
        });
        let scan = BeamScan::simulate(&map, &x, p.beams, p.max_range * res, p.beam_noise * res, p.beam_sigma * res, obs_rng);
        observations.push(scan.ok().map(|s| s.to_observation()));
        controls.push(u);
        truth.push(x.clone());
    }
    Ok(Instance {
        transition: filter_model,
        obs_models: vec![beams as Arc<dyn ObservationModel>; horizon],
        x0,
        controls,
        truth,
        observations,
        kind: Kind::Grid {
            map,
            global,
            params: p.clone(),
        },
    })
}
