use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Pairs with `y^T s` at or below this are rejected.
pub const CURVATURE_EPS: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Pair {
    s: DVector<f64>,
    y: DVector<f64>,
    rho: f64,
}

/// Limited-memory inverse-Hessian approximation for one particle.
///
/// `y` is the change of a descent gradient, so accepted pairs have positive
/// curvature and the implied matrix is positive definite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LbfgsHistory {
    capacity: usize,
    pairs: VecDeque<Pair>,
    rejected: usize,
    /// Initial inverse Hessian. Replaces the scalar scaling when set.
    seed: Option<DMatrix<f64>>,
}

impl LbfgsHistory {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            pairs: VecDeque::with_capacity(capacity),
            rejected: 0,
            seed: None,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn rejected(&self) -> usize {
        self.rejected
    }

    /// Sets `H_0`, which must be symmetric positive definite.
    pub fn set_seed(&mut self, h0: Option<DMatrix<f64>>) {
        self.seed = h0;
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
        self.rejected = 0;
        self.seed = None;
    }

    /// Drops the stored pairs, counting them as rejected, and keeps the seed.
    pub fn restart(&mut self) {
        self.rejected += self.pairs.len();
        self.pairs.clear();
    }

    /// Stores `(s, y)` if it passes the curvature guard. Returns whether it was kept.
    pub fn insert(&mut self, s: DVector<f64>, y: DVector<f64>) -> bool {
        let sy = y.dot(&s);
        if !(sy > CURVATURE_EPS) || s.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            self.rejected += 1;
            return false;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back(Pair { s, y, rho: 1.0 / sy });
        true
    }

    /// Stored displacement vectors, oldest first.
    pub fn displacements(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.pairs.iter().map(|p| &p.s)
    }

    /// `H g` by the two-loop recursion.
    pub fn direction(&self, g: &DVector<f64>) -> DVector<f64> {
        let mut q = g.clone();
        let mut alpha = Vec::with_capacity(self.pairs.len());
        for p in self.pairs.iter().rev() {
            let a = p.rho * p.s.dot(&q);
            q.axpy(-a, &p.y, 1.0);
            alpha.push(a);
        }
        let mut r = match (&self.seed, self.pairs.back()) {
            (Some(h0), _) => h0 * q,
            (None, Some(last)) => q * (last.s.dot(&last.y) / last.y.norm_squared()),
            (None, None) => q,
        };
        for (p, a) in self.pairs.iter().zip(alpha.into_iter().rev()) {
            let b = p.rho * p.y.dot(&r);
            r.axpy(a - b, &p.s, 1.0);
        }
        r
    }
}
