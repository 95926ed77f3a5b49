use nalgebra::{DMatrix, DVector};

use super::{check_len, GaussianNoise, ObservationModel, TransitionModel};
use crate::error::{invalid, Error, Result};
use crate::particles::{ControlInput, Observation, StateVector};
use crate::rng::RngStream;

/// `x' = F x + B u + v`, `z = H x + n` with `v ~ N(0, Q)`, `n ~ N(0, R)`.
///
/// Doubles as the oracle system: [`kalman_step`](Self::kalman_step) is the
/// exact posterior recursion.
#[derive(Clone, Debug)]
pub struct LinearGaussianModel {
    f: DMatrix<f64>,
    b: DMatrix<f64>,
    h: DMatrix<f64>,
    r: DMatrix<f64>,
    r_inv: DMatrix<f64>,
    log_norm: f64,
    noise: GaussianNoise,
}

impl LinearGaussianModel {
    pub fn new(
        f: DMatrix<f64>,
        b: DMatrix<f64>,
        q: DMatrix<f64>,
        h: DMatrix<f64>,
        r: DMatrix<f64>,
    ) -> Result<Self> {
        let d = f.nrows();
        if !f.is_square() || q.shape() != (d, d) || b.nrows() != d || h.ncols() != d {
            return Err(invalid("inconsistent linear-Gaussian model shapes"));
        }
        let dz = h.nrows();
        if r.shape() != (dz, dz) {
            return Err(invalid("observation covariance must be dz x dz"));
        }
        let chol = r
            .clone()
            .cholesky()
            .ok_or_else(|| invalid("observation covariance must be positive definite"))?;
        let r_inv = chol.inverse();
        let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        let log_norm = -0.5 * (dz as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        let noise = GaussianNoise::new(q)?;
        Ok(Self {
            f,
            b,
            h,
            r,
            r_inv,
            log_norm,
            noise,
        })
    }

    /// Scalar random walk observed directly: `F = 1, B = 0, H = 1`.
    pub fn scalar(q: f64, r: f64) -> Result<Self> {
        Self::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 0),
            DMatrix::from_element(1, 1, q),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, r),
        )
    }

    /// Planar constant velocity `(px, py, vx, vy)` with position measurements.
    pub fn constant_velocity_2d(sigma_a: f64, sigma_z: f64) -> Result<Self> {
        #[rustfmt::skip]
        let f = DMatrix::from_row_slice(4, 4, &[
            1.0, 0.0, 1.0, 0.0,
            0.0, 1.0, 0.0, 1.0,
            0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
        ]);
        // Discrete white-noise acceleration with dt = 1.
        let qa = sigma_a * sigma_a;
        #[rustfmt::skip]
        let q = DMatrix::from_row_slice(4, 4, &[
            0.25 * qa, 0.0, 0.5 * qa, 0.0,
            0.0, 0.25 * qa, 0.0, 0.5 * qa,
            0.5 * qa, 0.0, qa, 0.0,
            0.0, 0.5 * qa, 0.0, qa,
        ]);
        let mut h = DMatrix::zeros(2, 4);
        h[(0, 0)] = 1.0;
        h[(1, 1)] = 1.0;
        let r = DMatrix::identity(2, 2) * (sigma_z * sigma_z);
        Self::new(f, DMatrix::zeros(4, 0), q, h, r)
    }

    pub fn transition_matrix(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn observation_matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn observation_cov(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn obs_dim(&self) -> usize {
        self.h.nrows()
    }

    fn control_term(&self, u: &ControlInput) -> DVector<f64> {
        if self.b.ncols() == 0 || u.is_empty() {
            DVector::zeros(self.f.nrows())
        } else {
            &self.b * u
        }
    }

    pub fn predict_observation(&self, x: &StateVector) -> Observation {
        &self.h * x
    }

    /// Draws `z = H x + n`.
    pub fn sample_observation(&self, x: &StateVector, rng: &mut RngStream) -> Observation {
        let chol = self.r.clone().cholesky().expect("validated at construction");
        self.predict_observation(x) + chol.l() * rng.standard_normal_vector(self.obs_dim())
    }

    pub fn kalman_predict(
        &self,
        mean: &DVector<f64>,
        cov: &DMatrix<f64>,
        u: &ControlInput,
    ) -> (DVector<f64>, DMatrix<f64>) {
        let m = &self.f * mean + self.control_term(u);
        let p = &self.f * cov * self.f.transpose() + self.noise.cov();
        (m, symmetrize(p))
    }

    pub fn kalman_update(
        &self,
        mean: &DVector<f64>,
        cov: &DMatrix<f64>,
        z: &Observation,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let s = &self.h * cov * self.h.transpose() + &self.r;
        let s_inv = s
            .cholesky()
            .ok_or(Error::Singular("innovation covariance"))?
            .inverse();
        let gain = cov * self.h.transpose() * s_inv;
        let innovation = z - &self.h * mean;
        let m = mean + &gain * innovation;
        // Joseph form keeps the covariance symmetric positive definite.
        let i_kh = DMatrix::identity(cov.nrows(), cov.nrows()) - &gain * &self.h;
        let p = &i_kh * cov * i_kh.transpose() + &gain * &self.r * gain.transpose();
        Ok((m, symmetrize(p)))
    }

    /// One Kalman predict/update cycle.
    pub fn kalman_step(
        &self,
        mean: &DVector<f64>,
        cov: &DMatrix<f64>,
        u: &ControlInput,
        z: &Observation,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if cov.clone().cholesky().is_none() {
            return Err(invalid("prior covariance must be positive definite"));
        }
        let (m, p) = self.kalman_predict(mean, cov, u);
        self.kalman_update(&m, &p, z)
    }

    /// Fixed point of the posterior covariance recursion, iterated from `p0`.
    pub fn steady_state_covariance(&self, p0: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let d = self.f.nrows();
        let zero = DVector::zeros(d);
        let z0 = DVector::zeros(self.obs_dim());
        let u0 = DVector::zeros(self.b.ncols());
        let mut p = p0.clone();
        for _ in 0..10_000 {
            let (_, pp) = self.kalman_predict(&zero, &p, &u0);
            let (_, next) = self.kalman_update(&zero, &pp, &z0)?;
            let delta = (&next - &p).amax();
            p = next;
            if delta < 1e-14 * p.amax().max(1.0) {
                break;
            }
        }
        Ok(p)
    }
}

fn symmetrize(p: DMatrix<f64>) -> DMatrix<f64> {
    (&p + p.transpose()) * 0.5
}

impl TransitionModel for LinearGaussianModel {
    fn state_dim(&self) -> usize {
        self.f.nrows()
    }

    fn propagate_deterministic(&self, x: &StateVector, u: &ControlInput) -> StateVector {
        &self.f * x + self.control_term(u)
    }

    fn propagate(&self, x: &StateVector, u: &ControlInput, rng: &mut RngStream) -> StateVector {
        self.propagate_deterministic(x, u) + self.noise.sample(rng)
    }

    fn process_noise_cov(&self) -> DMatrix<f64> {
        self.noise.cov().clone()
    }
}

impl ObservationModel for LinearGaussianModel {
    fn state_dim(&self) -> usize {
        self.f.nrows()
    }

    fn log_likelihood(&self, x: &StateVector, z: &Observation) -> f64 {
        debug_assert!(check_len(z, self.obs_dim(), "observation").is_ok());
        let r = z - &self.h * x;
        self.log_norm - 0.5 * r.dot(&(&self.r_inv * &r))
    }

    fn score(&self, x: &StateVector, z: &Observation) -> StateVector {
        let r = z - &self.h * x;
        self.h.transpose() * (&self.r_inv * r)
    }

    fn curvature(&self, _x: &StateVector, _z: &Observation) -> Option<DMatrix<f64>> {
        Some(self.h.transpose() * &self.r_inv * &self.h)
    }
}
