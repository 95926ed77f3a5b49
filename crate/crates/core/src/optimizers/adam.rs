use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Adam moments for one particle. Steps follow `g` (ascent).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: DVector<f64>,
    v: DVector<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(dim: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: DVector::zeros(dim),
            v: DVector::zeros(dim),
            t: 0,
        }
    }

    pub fn iterations(&self) -> u64 {
        self.t
    }

    pub fn reset(&mut self) {
        self.m.fill(0.0);
        self.v.fill(0.0);
        self.t = 0;
    }

    pub fn step(&mut self, g: &DVector<f64>) -> DVector<f64> {
        self.t += 1;
        let t = self.t as i32;
        self.m = &self.m * self.beta1 + g * (1.0 - self.beta1);
        self.v = &self.v * self.beta2 + g.component_mul(g) * (1.0 - self.beta2);
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        self.m.zip_map(&self.v, |m, v| self.lr * (m / c1) / ((v / c2).sqrt() + self.eps))
    }
}
