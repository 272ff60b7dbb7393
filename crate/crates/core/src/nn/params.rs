use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, ordered collection of trainable matrices.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    entries: Vec<(String, Matrix)>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.entries.push((name.into(), value));
        ParamId(self.entries.len() - 1)
    }

    /// Adds a `fan_in x fan_out` matrix with Glorot-uniform initialization.
    pub fn add_glorot(
        &mut self,
        name: impl Into<String>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut impl Rng,
    ) -> ParamId {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let m = Matrix::from_fn(fan_in, fan_out, |_, _| rng.gen_range(-limit..limit));
        self.add(name, m)
    }

    pub fn add_normal(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        std: f64,
        rng: &mut impl Rng,
    ) -> ParamId {
        let normal = Normal::new(0.0, std).expect("valid std");
        let m = Matrix::from_fn(rows, cols, |_, _| normal.sample(rng));
        self.add(name, m)
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.entries[id.0].1
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.entries[id.0].1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.entries.iter().map(|(n, m)| (n.as_str(), m))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|(_, m)| m.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|(_, m)| m.is_finite())
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(params: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Matrix> = params
            .iter()
            .map(|(_, m)| Matrix::zeros(m.rows(), m.cols()))
            .collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Updates only the parameters whose `trainable` flag is set.
    pub fn step_masked(&mut self, params: &mut ParamStore, grads: &[Matrix], trainable: &[bool]) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, g) in grads.iter().enumerate() {
            if !trainable[i] {
                continue;
            }
            let p = params.get_mut(ParamId(i)).data_mut();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for k in 0..p.len() {
                let gk = g.data()[k];
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                let mh = m[k] / bc1;
                let vh = v[k] / bc2;
                p[k] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &[Matrix]) {
        let all = vec![true; grads.len()];
        self.step_masked(params, grads, &all);
    }
}

/// Multiplies the learning rate by `gamma` every `step_size` scheduler steps.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StepLr {
    pub initial: f64,
    pub gamma: f64,
    pub step_size: usize,
}

impl StepLr {
    pub fn lr_at(&self, step: usize) -> f64 {
        self.initial * self.gamma.powi((step / self.step_size) as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_lr_decays_every_five_steps() {
        let s = StepLr {
            initial: 1e-3,
            gamma: 0.8,
            step_size: 5,
        };
        assert_eq!(s.lr_at(0), 1e-3);
        assert_eq!(s.lr_at(4), 1e-3);
        assert!((s.lr_at(5) - 8e-4).abs() < 1e-15);
        assert!((s.lr_at(10) - 6.4e-4).abs() < 1e-15);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut store = ParamStore::new();
        let id = store.add("x", Matrix::from_vec(1, 2, vec![3.0, -2.0]));
        let mut opt = Adam::new(&store, 0.1);
        for _ in 0..500 {
            let g = store.get(id).scale(2.0);
            opt.step(&mut store, &[g]);
        }
        assert!(store.get(id).frobenius_norm() < 1e-2);
    }
}
