use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix2x3, Vector2, Vector3};

use super::{GridMap2D, LikelihoodEval, ObservationModel};
use crate::error::{invalid, Result};
use crate::particles::{Observation, StateVector};
use crate::rng::RngStream;

/// Beam endpoints in the sensor frame, plus the per-beam noise std.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamScan {
    pub endpoints: Vec<Vector2<f64>>,
    pub sigma: f64,
}

impl BeamScan {
    pub fn new(endpoints: Vec<Vector2<f64>>, sigma: f64) -> Result<Self> {
        if endpoints.is_empty() {
            return Err(invalid("a beam scan needs at least one beam"));
        }
        if !(sigma > 0.0) {
            return Err(invalid("beam noise std must be positive"));
        }
        Ok(Self { endpoints, sigma })
    }

    /// Flattened `[bx0, by0, bx1, by1, ...]` observation vector.
    pub fn to_observation(&self) -> Observation {
        DVector::from_iterator(
            2 * self.endpoints.len(),
            self.endpoints.iter().flat_map(|b| [b.x, b.y]),
        )
    }

    pub fn from_observation(z: &Observation, sigma: f64) -> Result<Self> {
        if z.len() % 2 != 0 {
            return Err(invalid("beam observation must have even length"));
        }
        Self::new(
            z.as_slice().chunks(2).map(|c| Vector2::new(c[0], c[1])).collect(),
            sigma,
        )
    }

    /// Simulated scan from `pose`: `k` evenly spaced beams, endpoint at the
    /// center of the first occupied cell hit, jittered by `noise_std` per axis.
    /// Beams that leave the map or exceed `max_range` are dropped.
    pub fn simulate(
        map: &GridMap2D,
        pose: &StateVector,
        k: usize,
        max_range: f64,
        noise_std: f64,
        sigma: f64,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let origin = Vector2::new(pose[0], pose[1]);
        let (s, c) = pose[2].sin_cos();
        let mut endpoints = Vec::with_capacity(k);
        for i in 0..k {
            let local = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
            let Some((cx, cy)) = map.ray_cast(origin, pose[2] + local, max_range) else {
                continue;
            };
            let hit = map.cell_center(cx, cy) - origin;
            // World offset into the sensor frame: R(theta)^T (hit - origin).
            let mut b = Vector2::new(c * hit.x + s * hit.y, -s * hit.x + c * hit.y);
            if noise_std > 0.0 {
                b += Vector2::new(rng.normal(0.0, noise_std), rng.normal(0.0, noise_std));
            }
            endpoints.push(b);
        }
        Self::new(endpoints, sigma)
    }
}

/// Beam-endpoint likelihood against a distance field:
/// `log p(z | x) = -sum_i D(T_x b_i)^2 / (2 sigma^2)`.
///
/// The pose is `(px, py, theta)`. The observation is a flattened
/// [`BeamScan`]; beams are matched to the map through the field rather than
/// by explicit data association.
#[derive(Clone, Debug)]
pub struct BeamModel {
    map: Arc<GridMap2D>,
    sigma: f64,
}

struct BeamTerm {
    world: Vector2<f64>,
    /// d(world)/d(px, py, theta).
    jacobian: Matrix2x3<f64>,
}

impl BeamModel {
    pub fn new(map: Arc<GridMap2D>, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(invalid("beam noise std must be positive"));
        }
        Ok(Self { map, sigma })
    }

    pub fn map(&self) -> &GridMap2D {
        &self.map
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    fn beams<'a>(&self, x: &StateVector, z: &'a Observation) -> impl Iterator<Item = BeamTerm> + 'a {
        let (px, py) = (x[0], x[1]);
        let (s, c) = x[2].sin_cos();
        z.as_slice().chunks(2).map(move |b| {
            let (bx, by) = (b[0], b[1]);
            let world = Vector2::new(c * bx - s * by + px, s * bx + c * by + py);
            let jacobian = Matrix2x3::new(1.0, 0.0, -s * bx - c * by, 0.0, 1.0, c * bx - s * by);
            BeamTerm { world, jacobian }
        })
    }

    /// Likelihood with the per-call count of beams that landed outside the map.
    pub fn evaluate_scan(&self, x: &StateVector, z: &Observation) -> LikelihoodEval {
        let s2 = self.sigma * self.sigma;
        let mut ll = 0.0;
        let mut grad = Vector3::zeros();
        let mut outside = 0;
        for beam in self.beams(x, z) {
            let f = self.map.sample(beam.world);
            if f.outside {
                outside += 1;
            }
            ll -= f.distance * f.distance / (2.0 * s2);
            grad -= beam.jacobian.transpose() * f.gradient * (f.distance / s2);
        }
        LikelihoodEval {
            log_likelihood: ll,
            score: DVector::from_column_slice(grad.as_slice()),
            out_of_bounds: outside,
        }
    }
}

impl ObservationModel for BeamModel {
    fn state_dim(&self) -> usize {
        3
    }

    fn log_likelihood(&self, x: &StateVector, z: &Observation) -> f64 {
        self.evaluate_scan(x, z).log_likelihood
    }

    fn score(&self, x: &StateVector, z: &Observation) -> StateVector {
        self.evaluate_scan(x, z).score
    }

    fn evaluate(&self, x: &StateVector, z: &Observation) -> LikelihoodEval {
        self.evaluate_scan(x, z)
    }

    fn curvature(&self, x: &StateVector, z: &Observation) -> Option<DMatrix<f64>> {
        let s2 = self.sigma * self.sigma;
        let mut c = nalgebra::Matrix3::zeros();
        for beam in self.beams(x, z) {
            let f = self.map.sample(beam.world);
            let j = f.gradient.transpose() * beam.jacobian;
            c += j.transpose() * j / s2;
        }
        Some(DMatrix::from_column_slice(3, 3, c.as_slice()))
    }

    fn correspondences(&self, x: &StateVector, z: &Observation) -> Option<Vec<f64>> {
        Some(
            self.beams(x, z)
                .flat_map(|b| {
                    let y = self.map.nearest_occupied(b.world);
                    [y.x, y.y]
                })
                .collect(),
        )
    }

    fn anchored_evaluate(&self, x: &StateVector, z: &Observation, anchors: &[f64]) -> Option<LikelihoodEval> {
        if anchors.len() != z.len() {
            return None;
        }
        let s2 = self.sigma * self.sigma;
        let mut ll = 0.0;
        let mut grad = Vector3::zeros();
        for (beam, y) in self.beams(x, z).zip(anchors.chunks(2)) {
            let r = beam.world - Vector2::new(y[0], y[1]);
            ll -= r.norm_squared() / (2.0 * s2);
            grad -= beam.jacobian.transpose() * r / s2;
        }
        Some(LikelihoodEval {
            log_likelihood: ll,
            score: DVector::from_column_slice(grad.as_slice()),
            out_of_bounds: 0,
        })
    }

    fn matched_count(&self, x: &StateVector, z: &Observation) -> Option<usize> {
        Some(self.beams(x, z).filter(|b| self.map.contains(b.world)).count())
    }
}
