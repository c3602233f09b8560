use serde::{Deserialize, Serialize};

use super::{Module, Tensor2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor2>,
    second: Vec<Tensor2>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self { config: AdamConfig::new(lr), step: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update to `model` using gradients held in `grad`, a twin
    /// of the model with the same parameter layout.
    pub fn step<M: Module>(&mut self, model: &mut M, grad: &M) {
        let grads = grad.params();
        if self.first.is_empty() {
            self.first = grads.iter().map(|g| Tensor2::zeros(g.rows, g.cols)).collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let mut params = model.params_mut();
        for (i, p) in params.iter_mut().enumerate() {
            adam_step(p, grads[i], &mut self.first[i], &mut self.second[i], &self.config, self.step);
        }
    }
}

/// One Adam update of a single parameter tensor at (1-based) step `t`.
pub fn adam_step(param: &mut Tensor2, grad: &Tensor2, m: &mut Tensor2, v: &mut Tensor2, cfg: &AdamConfig, t: u64) {
    debug_assert!(t >= 1);
    let c1 = 1.0 - cfg.beta1.powi(t as i32);
    let c2 = 1.0 - cfg.beta2.powi(t as i32);
    for (((w, g), m), v) in param.data.iter_mut().zip(&grad.data).zip(m.data.iter_mut()).zip(v.data.iter_mut()) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let mhat = *m / c1;
        let vhat = *v / c2;
        *w -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::Dense;

    #[derive(Clone)]
    struct Point(Tensor2);
    impl Module for Point {
        fn params(&self) -> Vec<&Tensor2> {
            vec![&self.0]
        }
        fn params_mut(&mut self) -> Vec<&mut Tensor2> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut d = Dense::new(3, 2, &mut rng);
        let before = d.clone();
        let mut opt = Adam::new(0.1);
        for _ in 0..5 {
            opt.step(&mut d, &before.zeroed());
        }
        assert_eq!(d, before);
    }

    #[test]
    fn constant_gradient_moves_at_learning_rate() {
        let mut p = Point(Tensor2::zeros(1, 2));
        let g = Point(Tensor2::from_vec(1, 2, vec![3.0, -0.01]).unwrap());
        let mut opt = Adam::new(0.01);
        let mut last = p.0.clone();
        for _ in 0..200 {
            opt.step(&mut p, &g);
            let d = p.0.sub(&last);
            assert!((d.data[0] + 0.01).abs() < 1e-6 && (d.data[1] - 0.01).abs() < 1e-4);
            last = p.0.clone();
        }
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut p = Point(Tensor2::from_vec(1, 2, vec![1.0, 1.0]).unwrap());
        let mut opt = Adam::new(0.05);
        for _ in 0..500 {
            let g = Point(p.0.scale(2.0));
            opt.step(&mut p, &g);
        }
        assert!(p.0.sum_sq().sqrt() < 1e-2, "{:?}", p.0);
    }
}
