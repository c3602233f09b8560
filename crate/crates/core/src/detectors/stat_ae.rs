use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DetectorError, Result, Standardizer};
use crate::features::{Label, WindowSample, STAT_FEATURES};
use crate::nn::layers::{tanh, tanh_backward};
use crate::nn::{Adam, Dense, Module, Tensor2};

pub const STAT_DIM: usize = STAT_FEATURES.end - STAT_FEATURES.start;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatAeConfig {
    pub hidden: usize,
    pub bottleneck: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for StatAeConfig {
    fn default() -> Self {
        Self { hidden: 6, bottleneck: 3, epochs: 60, lr: 1e-3, batch_size: 32, seed: 0 }
    }
}

/// Dense autoencoder `10 -> 6 -> 3 -> 6 -> 10` over the distributional,
/// stability and peer features. Hidden layers use tanh; the bottleneck and
/// output are linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatAe {
    pub config: StatAeConfig,
    pub enc1: Dense,
    pub enc2: Dense,
    pub dec1: Dense,
    pub dec2: Dense,
    pub input_norm: Standardizer,
    pub initial_loss: f64,
    pub final_loss: f64,
}

struct Trace {
    h1: Tensor2,
    z: Tensor2,
    h2: Tensor2,
    out: Tensor2,
}

impl StatAe {
    pub fn new(config: StatAeConfig, input_norm: Standardizer) -> Result<Self> {
        if input_norm.dim() != STAT_DIM {
            return Err(DetectorError::DimensionMismatch { expected: STAT_DIM, got: input_norm.dim() });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            enc1: Dense::new(STAT_DIM, config.hidden, &mut rng),
            enc2: Dense::new(config.hidden, config.bottleneck, &mut rng),
            dec1: Dense::new(config.bottleneck, config.hidden, &mut rng),
            dec2: Dense::new(config.hidden, STAT_DIM, &mut rng),
            config,
            input_norm,
            initial_loss: f64::NAN,
            final_loss: f64::NAN,
        })
    }

    /// Standardized batch, one row per feature slice.
    pub fn prepare<R: AsRef<[f64]>>(&self, rows: &[R]) -> Tensor2 {
        let data = rows.iter().flat_map(|r| self.input_norm.apply(r.as_ref())).collect();
        Tensor2::from_vec(rows.len(), STAT_DIM, data).expect("rows have the statistical feature width")
    }

    fn forward(&self, x: &Tensor2) -> Trace {
        let h1 = tanh(&self.enc1.forward(x));
        let z = self.enc2.forward(&h1);
        let h2 = tanh(&self.dec1.forward(&z));
        let out = self.dec2.forward(&h2);
        Trace { h1, z, h2, out }
    }

    /// Mean over rows of the per-row reconstruction MSE.
    pub fn loss(&self, x: &Tensor2) -> f64 {
        self.forward(x).out.sub(x).sum_sq() / x.data.len() as f64
    }

    pub fn loss_and_grad(&self, x: &Tensor2, grad: &mut StatAe) -> f64 {
        let tr = self.forward(x);
        let diff = tr.out.sub(x);
        let n = x.data.len() as f64;
        let g_out = diff.scale(2.0 / n);
        let g_h2 = self.dec2.backward(&tr.h2, &g_out, &mut grad.dec2);
        let g_z = self.dec1.backward(&tr.z, &tanh_backward(&tr.h2, &g_h2), &mut grad.dec1);
        let g_h1 = self.enc2.backward(&tr.h1, &g_z, &mut grad.enc2);
        self.enc1.backward(x, &tanh_backward(&tr.h1, &g_h1), &mut grad.enc1);
        diff.sum_sq() / n
    }

    /// Deviation score: reconstruction MSE of one raw statistical feature
    /// slice.
    pub fn score(&self, stat_features: &[f64]) -> f64 {
        self.loss(&self.prepare(&[stat_features]))
    }

    /// Trains on the REAL windows of `windows`, in canonical order.
    pub fn train(windows: &[WindowSample], config: &StatAeConfig) -> Result<Self> {
        let mut rows: Vec<&[f64]> =
            windows.iter().filter(|w| w.label == Label::Real).map(|w| w.features.stat_part()).collect();
        if rows.len() < 2 {
            return Err(DetectorError::InsufficientData { needed: 2, got: rows.len() });
        }
        rows.sort_by(|a, b| a.iter().zip(b.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
        let mut model = Self::new(config.clone(), Standardizer::fit(&rows)?)?;
        let all = model.prepare(&rows);
        model.initial_loss = model.loss(&all);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x57a7_ae00);
        let mut order: Vec<usize> = (0..rows.len()).collect();
        let mut adam = Adam::new(config.lr);
        for _ in 0..config.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(config.batch_size.max(1)) {
                let x = Tensor2::from_fn(batch.len(), STAT_DIM, |i, j| all.at(batch[i], j));
                let mut grad = model.zeroed();
                model.loss_and_grad(&x, &mut grad);
                adam.step(&mut model, &grad);
            }
        }
        model.final_loss = model.loss(&all);
        Ok(model)
    }
}

impl Module for StatAe {
    fn params(&self) -> Vec<&Tensor2> {
        [&self.enc1, &self.enc2, &self.dec1, &self.dec2].into_iter().flat_map(|d| d.params()).collect()
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        [&mut self.enc1, &mut self.enc2, &mut self.dec1, &mut self.dec2].into_iter().flat_map(|d| d.params_mut()).collect()
    }
}
