//! Adam over a [`ParamStore`].

use serde::{Deserialize, Serialize};

use super::graph::{Gradients, ParamStore};

/// Dense per-parameter gradients, zero where the loss did not reach.
pub fn dense_grads(store: &ParamStore, grads: Gradients) -> Vec<Vec<f64>> {
    grads
        .into_params()
        .into_iter()
        .zip(store.iter())
        .map(|(g, p)| g.unwrap_or_else(|| vec![0.0; p.value.len()]))
        .collect()
}

pub fn zero_grads(store: &ParamStore) -> Vec<Vec<f64>> {
    store.iter().map(|p| vec![0.0; p.value.len()]).collect()
}

/// `acc += scale * g`, elementwise over every parameter.
pub fn accumulate(acc: &mut [Vec<f64>], g: &[Vec<f64>], scale: f64) {
    for (a, g) in acc.iter_mut().zip(g) {
        for (a, g) in a.iter_mut().zip(g) {
            *a += scale * g;
        }
    }
}

pub fn global_norm(grads: &[Vec<f64>]) -> f64 {
    grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale gradients whose global norm exceeds this; `None` disables.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(1.0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        Adam {
            config,
            step: 0,
            m: zero_grads(store),
            v: zero_grads(store),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, store: &mut ParamStore, grads: &[Vec<f64>]) {
        let c = self.config;
        let scale = match c.clip_norm {
            Some(max) => {
                let norm = global_norm(grads);
                if norm > max { max / norm } else { 1.0 }
            }
            None => 1.0,
        };
        self.step += 1;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for (((p, g), m), v) in store.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.value.len() {
                let g = g[i] * scale;
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p.value[i] -= c.lr * mh / (vh.sqrt() + c.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Graph;

    #[test]
    fn first_step_moves_by_lr() {
        let mut store = ParamStore::new();
        let id = store.add("w", 1, 2, vec![1.0, -1.0]);
        let mut adam = Adam::new(AdamConfig { clip_norm: None, ..Default::default() }, &store);
        adam.update(&mut store, &[vec![0.5, -2.0]]);
        let w = &store.get(id).value;
        assert!((w[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((w[1] - (-1.0 + 1e-3)).abs() < 1e-9);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut store = ParamStore::new();
        let id = store.add("w", 1, 3, vec![3.0, -2.0, 0.5]);
        let cfg = AdamConfig { lr: 0.05, clip_norm: None, ..Default::default() };
        let mut adam = Adam::new(cfg, &store);
        for _ in 0..2000 {
            let grads = {
                let mut g = Graph::new(&store);
                let w = g.param(id);
                let sq = g.mul(w, w);
                let loss = g.sum(sq);
                dense_grads(&store, g.backward(loss))
            };
            adam.update(&mut store, &grads);
        }
        assert!(store.get(id).value.iter().all(|v| v.abs() < 1e-2));
    }
}
