use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DetectorError, Result, Standardizer};
use crate::features::{Label, WindowSample, SEQ_CHANNELS};
use crate::nn::layers::LayerNormCache;
use crate::nn::transformer::BlockCache;
use crate::nn::{sinusoidal_positions, Adam, Dense, LayerNorm, Module, Tensor2, TransformerBlock};

/// Minimum number of REAL windows needed to train.
pub const MIN_TRAINING_WINDOWS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerAeConfig {
    pub d_model: usize,
    pub heads: usize,
    pub ff_width: usize,
    pub latent_dim: usize,
    pub encoder_blocks: usize,
    pub decoder_blocks: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TransformerAeConfig {
    fn default() -> Self {
        Self {
            d_model: 32,
            heads: 2,
            ff_width: 64,
            latent_dim: 16,
            encoder_blocks: 2,
            decoder_blocks: 2,
            epochs: 40,
            lr: 1e-3,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// Sequence autoencoder: transformer encoder, mean-pooled latent, and a
/// transformer decoder that expands the latent back over every position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerAe {
    pub config: TransformerAeConfig,
    pub input_proj: Dense,
    pub encoder: Vec<TransformerBlock>,
    pub encoder_norm: LayerNorm,
    pub to_latent: Dense,
    pub from_latent: Dense,
    pub decoder: Vec<TransformerBlock>,
    pub decoder_norm: LayerNorm,
    pub output_proj: Dense,
    /// Per-channel input standardization fitted on the training windows.
    pub input_norm: Standardizer,
    /// Mean training reconstruction error before the first and after the
    /// last epoch.
    pub initial_loss: f64,
    pub final_loss: f64,
}

struct Trace {
    x: Tensor2,
    enc: Vec<BlockCache>,
    enc_norm: LayerNormCache,
    pooled: Tensor2,
    latent: Tensor2,
    dec: Vec<BlockCache>,
    dec_norm: LayerNormCache,
    dec_out: Tensor2,
    recon: Tensor2,
}

impl TransformerAe {
    pub fn new(config: TransformerAeConfig, input_norm: Standardizer) -> Result<Self> {
        if config.d_model == 0 || config.latent_dim == 0 || config.batch_size == 0 {
            return Err(DetectorError::InvalidConfig("zero-sized transformer autoencoder".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (d, c) = (config.d_model, SEQ_CHANNELS);
        let input_proj = Dense::new(c, d, &mut rng);
        let encoder = (0..config.encoder_blocks)
            .map(|_| TransformerBlock::new(d, config.heads, config.ff_width, &mut rng))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let to_latent = Dense::new(d, config.latent_dim, &mut rng);
        let from_latent = Dense::new(config.latent_dim, d, &mut rng);
        let decoder = (0..config.decoder_blocks)
            .map(|_| TransformerBlock::new(d, config.heads, config.ff_width, &mut rng))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let output_proj = Dense::new(d, c, &mut rng);
        Ok(Self {
            config,
            input_proj,
            encoder,
            encoder_norm: LayerNorm::new(d),
            to_latent,
            from_latent,
            decoder,
            decoder_norm: LayerNorm::new(d),
            output_proj,
            input_norm,
            initial_loss: f64::NAN,
            final_loss: f64::NAN,
        })
    }

    /// Standardized `T x SEQ_CHANNELS` input matrix.
    pub fn prepare(&self, seq: &[[f64; SEQ_CHANNELS]]) -> Tensor2 {
        Tensor2::from_fn(seq.len(), SEQ_CHANNELS, |t, c| self.input_norm.apply_one(c, seq[t][c]))
    }

    fn forward(&self, x: &Tensor2) -> Trace {
        let t = x.rows;
        let pos = sinusoidal_positions(t, self.config.d_model);
        let mut h = self.input_proj.forward(x).add(&pos);
        let mut enc = Vec::with_capacity(self.encoder.len());
        for b in &self.encoder {
            let (y, c) = b.forward(&h);
            enc.push(c);
            h = y;
        }
        let (normed, enc_norm) = self.encoder_norm.forward(&h);
        let pooled = normed.mean_rows();
        let latent = self.to_latent.forward(&pooled);
        let mut g = self.from_latent.forward(&latent).repeat_row(t).add(&pos);
        let mut dec = Vec::with_capacity(self.decoder.len());
        for b in &self.decoder {
            let (y, c) = b.forward(&g);
            dec.push(c);
            g = y;
        }
        let (dec_out, dec_norm) = self.decoder_norm.forward(&g);
        let recon = self.output_proj.forward(&dec_out);
        Trace { x: x.clone(), enc, enc_norm, pooled, latent, dec, dec_norm, dec_out, recon }
    }

    /// Mean squared reconstruction error of a standardized input.
    pub fn loss(&self, x: &Tensor2) -> f64 {
        let tr = self.forward(x);
        tr.recon.sub(x).sum_sq() / x.data.len() as f64
    }

    /// Loss of `x` with its parameter gradient added into `grad`.
    pub fn loss_and_grad(&self, x: &Tensor2, grad: &mut TransformerAe) -> f64 {
        let tr = self.forward(x);
        let diff = tr.recon.sub(&tr.x);
        let n = x.data.len() as f64;
        let g_recon = diff.scale(2.0 / n);
        let g_dec_out = self.output_proj.backward(&tr.dec_out, &g_recon, &mut grad.output_proj);
        let mut g = self.decoder_norm.backward(&tr.dec_norm, &g_dec_out, &mut grad.decoder_norm);
        for (i, b) in self.decoder.iter().enumerate().rev() {
            g = b.backward(&tr.dec[i], &g, &mut grad.decoder[i]);
        }
        let g_expanded = g.sum_rows();
        let g_latent = self.from_latent.backward(&tr.latent, &g_expanded, &mut grad.from_latent);
        let g_pooled = self.to_latent.backward(&tr.pooled, &g_latent, &mut grad.to_latent);
        let g_normed = g_pooled.scale(1.0 / x.rows as f64).repeat_row(x.rows);
        let mut g = self.encoder_norm.backward(&tr.enc_norm, &g_normed, &mut grad.encoder_norm);
        for (i, b) in self.encoder.iter().enumerate().rev() {
            g = b.backward(&tr.enc[i], &g, &mut grad.encoder[i]);
        }
        self.input_proj.backward(&tr.x, &g, &mut grad.input_proj);
        diff.sum_sq() / n
    }

    /// Reconstruction MSE of a raw window sequence.
    pub fn recon_error(&self, seq: &[[f64; SEQ_CHANNELS]]) -> f64 {
        self.loss(&self.prepare(seq))
    }

    /// Latent (bottleneck) vector of a raw window sequence.
    pub fn latent(&self, seq: &[[f64; SEQ_CHANNELS]]) -> Vec<f64> {
        self.forward(&self.prepare(seq)).latent.data
    }

    /// Reconstruction error and latent from a single forward pass.
    pub fn recon_and_latent(&self, seq: &[[f64; SEQ_CHANNELS]]) -> (f64, Vec<f64>) {
        let x = self.prepare(seq);
        let tr = self.forward(&x);
        (tr.recon.sub(&x).sum_sq() / x.data.len() as f64, tr.latent.data)
    }

    /// Trains on the REAL windows of `windows`.
    ///
    /// Sequences are sorted into a canonical order before the seeded
    /// shuffles, so the result does not depend on the input order.
    pub fn train(windows: &[WindowSample], config: &TransformerAeConfig) -> Result<Self> {
        let mut seqs: Vec<&Vec<[f64; SEQ_CHANNELS]>> =
            windows.iter().filter(|w| w.label == Label::Real).map(|w| &w.sequence).collect();
        if seqs.len() < MIN_TRAINING_WINDOWS {
            return Err(DetectorError::InsufficientData { needed: MIN_TRAINING_WINDOWS, got: seqs.len() });
        }
        seqs.sort_by(|a, b| {
            a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(a.len().cmp(&b.len()))
        });
        let rows: Vec<[f64; SEQ_CHANNELS]> = seqs.iter().flat_map(|s| s.iter().copied()).collect();
        let mut model = Self::new(config.clone(), Standardizer::fit(&rows)?)?;
        let inputs: Vec<Tensor2> = seqs.iter().map(|s| model.prepare(s)).collect();
        let mean_loss = |m: &Self| inputs.iter().map(|x| m.loss(x)).sum::<f64>() / inputs.len() as f64;
        model.initial_loss = mean_loss(&model);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_ae00);
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        let mut adam = Adam::new(config.lr);
        for _ in 0..config.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(config.batch_size) {
                let mut grad = model.zeroed();
                for &i in batch {
                    model.loss_and_grad(&inputs[i], &mut grad);
                }
                grad.scale_params(1.0 / batch.len() as f64);
                adam.step(&mut model, &grad);
            }
        }
        model.final_loss = mean_loss(&model);
        Ok(model)
    }
}

impl Module for TransformerAe {
    fn params(&self) -> Vec<&Tensor2> {
        let mut p = self.input_proj.params();
        self.encoder.iter().for_each(|b| p.extend(b.params()));
        p.extend(self.encoder_norm.params());
        p.extend(self.to_latent.params());
        p.extend(self.from_latent.params());
        self.decoder.iter().for_each(|b| p.extend(b.params()));
        p.extend(self.decoder_norm.params());
        p.extend(self.output_proj.params());
        p
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        let mut p = self.input_proj.params_mut();
        self.encoder.iter_mut().for_each(|b| p.extend(b.params_mut()));
        p.extend(self.encoder_norm.params_mut());
        p.extend(self.to_latent.params_mut());
        p.extend(self.from_latent.params_mut());
        self.decoder.iter_mut().for_each(|b| p.extend(b.params_mut()));
        p.extend(self.decoder_norm.params_mut());
        p.extend(self.output_proj.params_mut());
        p
    }
}
