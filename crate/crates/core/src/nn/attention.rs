use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{softmax_rows, softmax_rows_backward, Dense};
use super::{Module, NnError, Result, Tensor2};

/// Scaled dot-product attention for one head. Returns the context and the
/// attention probabilities (softmax over keys).
pub fn attention_forward(q: &Tensor2, k: &Tensor2, v: &Tensor2) -> Result<(Tensor2, Tensor2)> {
    if q.cols != k.cols || k.rows != v.rows {
        return Err(NnError::ShapeMismatch(format!(
            "q {:?}, k {:?}, v {:?}",
            q.shape(),
            k.shape(),
            v.shape()
        )));
    }
    let scale = 1.0 / (q.cols as f64).sqrt();
    let probs = softmax_rows(&q.matmul_t(k).scale(scale));
    Ok((probs.matmul(v), probs))
}

/// Gradients of one attention head with respect to `(q, k, v)`.
pub fn attention_backward(
    q: &Tensor2,
    k: &Tensor2,
    v: &Tensor2,
    probs: &Tensor2,
    grad_ctx: &Tensor2,
) -> (Tensor2, Tensor2, Tensor2) {
    let scale = 1.0 / (q.cols as f64).sqrt();
    let grad_v = probs.t_matmul(grad_ctx);
    let grad_probs = grad_ctx.matmul_t(v);
    let grad_scores = softmax_rows_backward(probs, &grad_probs).scale(scale);
    let grad_q = grad_scores.matmul(k);
    let grad_k = grad_scores.t_matmul(q);
    (grad_q, grad_k, grad_v)
}

/// Multi-head self-attention with output projection.
///
/// The key bias adds the same amount to every score in a row, which the
/// softmax ignores, so it stays at zero and is not a trainable parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiHeadAttention {
    pub heads: usize,
    pub query: Dense,
    pub key: Dense,
    pub value: Dense,
    pub output: Dense,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    x: Tensor2,
    q: Tensor2,
    k: Tensor2,
    v: Tensor2,
    probs: Vec<Tensor2>,
    ctx: Tensor2,
}

impl MultiHeadAttention {
    pub fn new<R: Rng + ?Sized>(width: usize, heads: usize, rng: &mut R) -> Result<Self> {
        if heads == 0 || width % heads != 0 {
            return Err(NnError::ShapeMismatch(format!("{heads} heads do not divide width {width}")));
        }
        Ok(Self {
            heads,
            query: Dense::new(width, width, rng),
            key: Dense::new(width, width, rng),
            value: Dense::new(width, width, rng),
            output: Dense::new(width, width, rng),
        })
    }

    fn head_width(&self) -> usize {
        self.query.fan_out() / self.heads
    }

    pub fn forward(&self, x: &Tensor2) -> (Tensor2, AttentionCache) {
        let q = self.query.forward(x);
        let k = self.key.forward(x);
        let v = self.value.forward(x);
        let dh = self.head_width();
        let mut ctx = Tensor2::zeros(x.rows, q.cols);
        let mut probs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (from, to) = (h * dh, (h + 1) * dh);
            let (c, p) = attention_forward(&q.cols_slice(from, to), &k.cols_slice(from, to), &v.cols_slice(from, to))
                .expect("head slices share shapes");
            ctx.set_cols(from, &c);
            probs.push(p);
        }
        let y = self.output.forward(&ctx);
        (y, AttentionCache { x: x.clone(), q, k, v, probs, ctx })
    }

    pub fn backward(&self, cache: &AttentionCache, grad_y: &Tensor2, grad: &mut MultiHeadAttention) -> Tensor2 {
        let grad_ctx = self.output.backward(&cache.ctx, grad_y, &mut grad.output);
        let dh = self.head_width();
        let (rows, width) = cache.q.shape();
        let mut gq = Tensor2::zeros(rows, width);
        let mut gk = Tensor2::zeros(rows, width);
        let mut gv = Tensor2::zeros(rows, width);
        for h in 0..self.heads {
            let (from, to) = (h * dh, (h + 1) * dh);
            let (a, b, c) = attention_backward(
                &cache.q.cols_slice(from, to),
                &cache.k.cols_slice(from, to),
                &cache.v.cols_slice(from, to),
                &cache.probs[h],
                &grad_ctx.cols_slice(from, to),
            );
            gq.set_cols(from, &a);
            gk.set_cols(from, &b);
            gv.set_cols(from, &c);
        }
        let mut gx = self.query.backward(&cache.x, &gq, &mut grad.query);
        gx.add_assign(&self.key.backward(&cache.x, &gk, &mut grad.key));
        gx.add_assign(&self.value.backward(&cache.x, &gv, &mut grad.value));
        gx
    }
}

impl Module for MultiHeadAttention {
    fn params(&self) -> Vec<&Tensor2> {
        let mut p = self.query.params();
        p.push(&self.key.weight);
        p.extend(self.value.params());
        p.extend(self.output.params());
        p
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        let mut p = self.query.params_mut();
        p.push(&mut self.key.weight);
        p.extend(self.value.params_mut());
        p.extend(self.output.params_mut());
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor2 {
        Tensor2::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn single_position_returns_value() {
        let q = Tensor2::from_rows(&[[0.3, -2.0]]).unwrap();
        let k = Tensor2::from_rows(&[[1.5, 0.1]]).unwrap();
        let v = Tensor2::from_rows(&[[4.0, -7.0, 2.5]]).unwrap();
        let (ctx, _) = attention_forward(&q, &k, &v).unwrap();
        assert!(ctx.max_abs_diff(&v) < 1e-15);
    }

    #[test]
    fn uniform_scores_average_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = random(3, 4, &mut rng);
        let k = Tensor2::zeros(5, 4);
        let v = random(5, 2, &mut rng);
        let (ctx, _) = attention_forward(&q, &k, &v).unwrap();
        let mean = v.mean_rows();
        for i in 0..3 {
            assert!((ctx.at(i, 0) - mean.data[0]).abs() < 1e-12);
            assert!((ctx.at(i, 1) - mean.data[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_errors() {
        let a = Tensor2::zeros(3, 4);
        assert!(attention_forward(&a, &Tensor2::zeros(3, 5), &a).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(MultiHeadAttention::new(10, 3, &mut rng).is_err());
    }

    #[test]
    fn backward_matches_directional_derivatives() {
        // Random 3x4 case: compare <grad, dir> against central differences of
        // <ctx(x + h dir), g> for each of q, k, v.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let q = random(3, 4, &mut rng);
        let k = random(3, 4, &mut rng);
        let v = random(3, 4, &mut rng);
        let g = random(3, 4, &mut rng);
        let (_, probs) = attention_forward(&q, &k, &v).unwrap();
        let (gq, gk, gv) = attention_backward(&q, &k, &v, &probs, &g);
        let loss = |q: &Tensor2, k: &Tensor2, v: &Tensor2| attention_forward(q, k, v).unwrap().0.hadamard(&g).sum();
        let h = 1e-5;
        for which in 0..3 {
            let dir = random(3, 4, &mut rng);
            let shift = |t: &Tensor2, s: f64| t.add(&dir.scale(s));
            let (plus, minus) = match which {
                0 => (loss(&shift(&q, h), &k, &v), loss(&shift(&q, -h), &k, &v)),
                1 => (loss(&q, &shift(&k, h), &v), loss(&q, &shift(&k, -h), &v)),
                _ => (loss(&q, &k, &shift(&v, h)), loss(&q, &k, &shift(&v, -h))),
            };
            let numeric = (plus - minus) / (2.0 * h);
            let analytic = [&gq, &gk, &gv][which].hadamard(&dir).sum();
            assert!((numeric - analytic).abs() < 1e-8, "{which}: {numeric} vs {analytic}");
        }
    }
}
