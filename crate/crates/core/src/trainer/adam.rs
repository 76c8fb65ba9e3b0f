use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::kernel::{Matrix, ParamStore};

/// Per-step learning-rate multiplier `λ_t / λ`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    #[default]
    Constant,
}

impl Schedule {
    pub fn factor(self, _step: u64) -> f64 {
        match self {
            Schedule::Constant => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments, one moment pair per parameter.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    step: u64,
}

impl Adam {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros: Vec<Matrix> = store
            .iter()
            .map(|p| Matrix::zeros(p.value.rows(), p.value.cols()))
            .collect();
        Self {
            config,
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients currently held in `store`.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) {
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let t = self.step as f64;
        let c1 = 1.0 - libm::pow(beta1, t);
        let c2 = 1.0 - libm::pow(beta2, t);
        for (i, p) in store.iter_mut().enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let g = p.grad.data();
            let w = p.value.data_mut();
            for k in 0..w.len() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                w[k] -= lr * m_hat / (libm::sqrt(v_hat) + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut store = ParamStore::new();
        let id = store.add("w", Matrix::from_vec(1, 2, alloc::vec![1.0, 1.0]).unwrap());
        store.get_mut(id).grad = Matrix::from_vec(1, 2, alloc::vec![0.5, -3.0]).unwrap();
        let mut adam = Adam::new(&store, AdamConfig::default());
        adam.step(&mut store, 0.01);
        let w = store.get(id).value.data();
        assert!((w[0] - 0.99).abs() < 1e-7);
        assert!((w[1] - 1.01).abs() < 1e-7);
    }

    #[test]
    fn zero_rate_is_identity() {
        let mut store = ParamStore::new();
        let id = store.add(
            "w",
            Matrix::from_vec(1, 3, alloc::vec![0.1, -2.5, 7.0]).unwrap(),
        );
        let before = store.get(id).value.clone();
        store.get_mut(id).grad = Matrix::from_vec(1, 3, alloc::vec![1e3, -1e-3, 0.0]).unwrap();
        let mut adam = Adam::new(&store, AdamConfig::default());
        for _ in 0..5 {
            adam.step(&mut store, 0.0);
        }
        assert_eq!(store.get(id).value, before);
    }
}
