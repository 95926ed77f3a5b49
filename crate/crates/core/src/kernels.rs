//! RBF kernels on state space and batched Gram evaluation.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::particles::StateVector;

/// Eigenvalue floor applied to anisotropic metrics.
pub const METRIC_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum KernelSpec {
    /// `k = exp(-|x - x'|^2 / h)`.
    Isotropic { h: f64 },
    /// `k = exp(-(x - x')^T M (x - x') / d)`.
    Anisotropic { metric: DMatrix<f64>, d: usize },
}

impl KernelSpec {
    pub fn isotropic(h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(invalid("kernel bandwidth must be positive and finite"));
        }
        Ok(Self::Isotropic { h })
    }

    /// Anisotropic kernel; the metric is symmetrized and floored.
    pub fn anisotropic(metric: DMatrix<f64>) -> Result<Self> {
        if !metric.is_square() || metric.nrows() == 0 {
            return Err(invalid("kernel metric must be a nonempty square matrix"));
        }
        if metric.iter().any(|v| !v.is_finite()) {
            return Err(invalid("kernel metric has non-finite entries"));
        }
        let d = metric.nrows();
        Ok(Self::Anisotropic {
            metric: floor_eigenvalues(&metric),
            d,
        })
    }
}

pub fn rbf_eval(x: &StateVector, y: &StateVector, h: f64) -> f64 {
    (-(x - y).norm_squared() / h).exp()
}

pub fn scaled_rbf_eval(x: &StateVector, y: &StateVector, metric: &DMatrix<f64>, d: usize) -> f64 {
    let delta = x - y;
    (-delta.dot(&(metric * &delta)) / d as f64).exp()
}

/// `med^2 / ln N` over pairwise Euclidean distances, 1 when the median is 0.
pub fn median_heuristic(states: &[StateVector]) -> Result<f64> {
    let n = states.len();
    if n < 2 {
        return Err(invalid("median heuristic needs at least two particles"));
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            dists.push((&states[i] - &states[j]).norm());
        }
    }
    dists.sort_by(f64::total_cmp);
    let m = dists.len();
    let med = if m % 2 == 1 {
        dists[m / 2]
    } else {
        0.5 * (dists[m / 2 - 1] + dists[m / 2])
    };
    if med == 0.0 {
        return Ok(1.0);
    }
    Ok(med * med / (n as f64).ln())
}

/// Mean of the curvature matrices with the eigenvalue floor applied.
pub fn metric_from_curvature(curvatures: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let first = curvatures
        .first()
        .ok_or_else(|| invalid("need at least one curvature matrix"))?;
    let mut sum = DMatrix::zeros(first.nrows(), first.ncols());
    for c in curvatures {
        if c.shape() != first.shape() {
            return Err(invalid("curvature matrices differ in shape"));
        }
        sum += c;
    }
    sum /= curvatures.len() as f64;
    Ok(floor_eigenvalues(&sum))
}

fn floor_eigenvalues(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= METRIC_FLOOR) {
        return sym;
    }
    let clamped = eig.eigenvalues.map(|l| l.max(METRIC_FLOOR));
    let v = &eig.eigenvectors;
    let r = v * DMatrix::from_diagonal(&clamped) * v.transpose();
    (&r + r.transpose()) * 0.5
}

/// Kernel values `K[j, l]` and gradients `grad(j, l) = d/dx_j k(x_j, x_l)`.
#[derive(Clone, Debug)]
pub struct GramResult {
    pub k: DMatrix<f64>,
    grad: Vec<f64>,
    n: usize,
    d: usize,
}

impl GramResult {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn grad(&self, j: usize, l: usize) -> &[f64] {
        let start = (j * self.n + l) * self.d;
        &self.grad[start..start + self.d]
    }
}

pub fn gram_and_grads(states: &[StateVector], spec: &KernelSpec) -> Result<GramResult> {
    let n = states.len();
    if n == 0 {
        return Err(invalid("empty particle set"));
    }
    let d = states[0].len();
    if states.iter().any(|s| s.len() != d) {
        return Err(invalid("particles differ in dimension"));
    }
    // For the anisotropic kernel the metric is applied once per particle:
    // M (x_j - x_l) = M x_j - M x_l.
    let (mapped, scale): (Vec<DVector<f64>>, f64) = match spec {
        KernelSpec::Isotropic { h } => (states.to_vec(), 1.0 / h),
        KernelSpec::Anisotropic { metric, d: kd } => {
            if metric.nrows() != d {
                return Err(invalid("kernel metric does not match particle dimension"));
            }
            (states.iter().map(|x| metric * x).collect(), 1.0 / *kd as f64)
        }
    };

    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut krow = vec![0.0; n];
            let mut grow = vec![0.0; n * d];
            for l in 0..n {
                if l == j {
                    krow[l] = 1.0;
                    continue;
                }
                let mut quad = 0.0;
                for i in 0..d {
                    quad += (states[j][i] - states[l][i]) * (mapped[j][i] - mapped[l][i]);
                }
                let kv = (-scale * quad).exp();
                krow[l] = kv;
                let g = &mut grow[l * d..(l + 1) * d];
                for i in 0..d {
                    g[i] = -2.0 * scale * (mapped[j][i] - mapped[l][i]) * kv;
                }
            }
            (krow, grow)
        })
        .collect();

    let mut k = DMatrix::zeros(n, n);
    let mut grad = Vec::with_capacity(n * n * d);
    for (j, (krow, grow)) in rows.into_iter().enumerate() {
        for (l, v) in krow.into_iter().enumerate() {
            k[(j, l)] = v;
        }
        grad.extend(grow);
    }
    Ok(GramResult { k, grad, n, d })
}
