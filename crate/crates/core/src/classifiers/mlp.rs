use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_lengths, class_weights, Result, TRIPLET_DIM};
use crate::features::Label;
use crate::nn::layers::{sigmoid, tanh, tanh_backward};
use crate::nn::{Adam, Dense, Module, Tensor2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub class_weighting: bool,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self { hidden: 16, epochs: 200, lr: 1e-3, batch_size: 32, class_weighting: true, seed: 0 }
    }
}

/// `3 -> hidden (tanh) -> 1 (sigmoid)` trained with weighted binary
/// cross-entropy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpHead {
    pub config: MlpConfig,
    pub hidden: Dense,
    pub output: Dense,
}

impl MlpHead {
    pub fn new(config: MlpConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let hidden = Dense::new(TRIPLET_DIM, config.hidden, &mut rng);
        let output = Dense::new(config.hidden, 1, &mut rng);
        Self { config, hidden, output }
    }

    pub fn logits(&self, x: &Tensor2) -> Tensor2 {
        self.output.forward(&tanh(&self.hidden.forward(x)))
    }

    pub fn logit(&self, x: &[f64; TRIPLET_DIM]) -> f64 {
        self.logits(&Tensor2 { rows: 1, cols: TRIPLET_DIM, data: x.to_vec() }).data[0]
    }

    pub fn predict_proba(&self, x: &[f64; TRIPLET_DIM]) -> f64 {
        sigmoid(self.logit(x))
    }

    /// Weighted mean binary cross-entropy of a batch; `w` sums need not be 1.
    pub fn loss(&self, x: &Tensor2, y: &[f64], w: &[f64]) -> f64 {
        let z = self.logits(x);
        let total: f64 = w.iter().sum();
        z.data.iter().zip(y).zip(w).map(|((&z, &y), &w)| w * bce_with_logit(z, y)).sum::<f64>() / total
    }

    pub fn loss_and_grad(&self, x: &Tensor2, y: &[f64], w: &[f64], grad: &mut MlpHead) -> f64 {
        let pre = self.hidden.forward(x);
        let h = tanh(&pre);
        let z = self.output.forward(&h);
        let total: f64 = w.iter().sum();
        let gz = Tensor2 {
            rows: z.rows,
            cols: 1,
            data: z.data.iter().zip(y).zip(w).map(|((&z, &y), &w)| w * (sigmoid(z) - y) / total).collect(),
        };
        let gh = self.output.backward(&h, &gz, &mut grad.output);
        self.hidden.backward(x, &tanh_backward(&h, &gh), &mut grad.hidden);
        z.data.iter().zip(y).zip(w).map(|((&z, &y), &w)| w * bce_with_logit(z, y)).sum::<f64>() / total
    }

    pub fn train(x: &[[f64; TRIPLET_DIM]], y: &[Label], config: &MlpConfig) -> Result<Self> {
        check_lengths(x, y, 2)?;
        let weights = if config.class_weighting { class_weights(y) } else { vec![1.0; y.len()] };
        let targets: Vec<f64> = y.iter().map(|l| if l.is_fake() { 1.0 } else { 0.0 }).collect();
        let mut model = Self::new(config.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6d6c_7000);
        let mut order: Vec<usize> = (0..x.len()).collect();
        let mut adam = Adam::new(config.lr);
        for _ in 0..config.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(config.batch_size.max(1)) {
                let xb = Tensor2::from_fn(batch.len(), TRIPLET_DIM, |i, j| x[batch[i]][j]);
                let yb: Vec<f64> = batch.iter().map(|&i| targets[i]).collect();
                let wb: Vec<f64> = batch.iter().map(|&i| weights[i]).collect();
                let mut grad = model.zeroed();
                model.loss_and_grad(&xb, &yb, &wb, &mut grad);
                adam.step(&mut model, &grad);
            }
        }
        Ok(model)
    }
}

/// `-[y ln s(z) + (1-y) ln(1-s(z))]`, computed without overflow.
pub fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

impl Module for MlpHead {
    fn params(&self) -> Vec<&Tensor2> {
        let mut p = self.hidden.params();
        p.extend(self.output.params());
        p
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        let mut p = self.hidden.params_mut();
        p.extend(self.output.params_mut());
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;

    #[test]
    fn bce_matches_direct_formula() {
        for (z, y) in [(0.3, 1.0), (-2.0, 0.0), (4.0, 0.0)] {
            let s = sigmoid(z);
            let direct = -(y * s.ln() + (1.0 - y) * (1.0 - s).ln());
            assert!((bce_with_logit(z, y) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = MlpHead::new(MlpConfig::default());
        let x = Tensor2::from_rows(&[[0.5, -1.0, 2.0], [1.5, 0.2, -0.3], [-0.7, 0.9, 0.1]]).unwrap();
        let (y, w) = ([1.0, 0.0, 1.0], [0.5, 2.0, 1.0]);
        let mut g = m.zeroed();
        m.loss_and_grad(&x, &y, &w, &mut g);
        let err = grad_check(&m, &g, |m| m.loss(&x, &y, &w), 1e-5, usize::MAX, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn separates_a_linear_boundary() {
        let x: Vec<[f64; 3]> = (0..200).map(|i| [(i as f64 - 100.0) / 50.0, 0.0, 0.0]).collect();
        let y: Vec<Label> = x.iter().map(|r| Label::from_fake(r[0] > 0.5)).collect();
        let m = MlpHead::train(&x, &y, &MlpConfig { epochs: 100, lr: 1e-2, ..Default::default() }).unwrap();
        let acc = x.iter().zip(&y).filter(|(r, l)| (m.predict_proba(r) > 0.5) == l.is_fake()).count();
        assert!(acc >= 195, "{acc}");
    }

    #[test]
    fn constant_labels_drive_probability_to_the_prior() {
        let x: Vec<[f64; 3]> = (0..100).map(|i| [i as f64 / 100.0, 0.0, 1.0]).collect();
        let y = vec![Label::Real; 100];
        let m = MlpHead::train(&x, &y, &MlpConfig { epochs: 100, ..Default::default() }).unwrap();
        assert!(m.predict_proba(&x[50]) < 0.05);
    }
}
