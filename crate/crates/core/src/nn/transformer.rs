use rand::Rng;
use serde::{Deserialize, Serialize};

use super::attention::{AttentionCache, MultiHeadAttention};
use super::layers::{gelu, gelu_backward, Dense, LayerNorm, LayerNormCache};
use super::{Module, Result, Tensor2};

/// Pre-norm encoder block: `h = x + MHA(LN(x))`, `y = h + FF(LN(h))` with a
/// GELU feed-forward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerBlock {
    pub norm1: LayerNorm,
    pub attention: MultiHeadAttention,
    pub norm2: LayerNorm,
    pub ff_in: Dense,
    pub ff_out: Dense,
}

#[derive(Debug, Clone)]
pub struct BlockCache {
    n1: LayerNormCache,
    attn: AttentionCache,
    n2: LayerNormCache,
    n2_out: Tensor2,
    ff_pre: Tensor2,
    ff_act: Tensor2,
}

impl TransformerBlock {
    pub fn new<R: Rng + ?Sized>(width: usize, heads: usize, ff_width: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            norm1: LayerNorm::new(width),
            attention: MultiHeadAttention::new(width, heads, rng)?,
            norm2: LayerNorm::new(width),
            ff_in: Dense::new(width, ff_width, rng),
            ff_out: Dense::new(ff_width, width, rng),
        })
    }

    pub fn forward(&self, x: &Tensor2) -> (Tensor2, BlockCache) {
        let (n1_out, n1) = self.norm1.forward(x);
        let (a, attn) = self.attention.forward(&n1_out);
        let h = x.add(&a);
        let (n2_out, n2) = self.norm2.forward(&h);
        let ff_pre = self.ff_in.forward(&n2_out);
        let ff_act = gelu(&ff_pre);
        let y = h.add(&self.ff_out.forward(&ff_act));
        (y, BlockCache { n1, attn, n2, n2_out, ff_pre, ff_act })
    }

    pub fn backward(&self, cache: &BlockCache, grad_y: &Tensor2, grad: &mut TransformerBlock) -> Tensor2 {
        let g_act = self.ff_out.backward(&cache.ff_act, grad_y, &mut grad.ff_out);
        let g_pre = gelu_backward(&cache.ff_pre, &g_act);
        let g_n2 = self.ff_in.backward(&cache.n2_out, &g_pre, &mut grad.ff_in);
        let mut g_h = self.norm2.backward(&cache.n2, &g_n2, &mut grad.norm2);
        g_h.add_assign(grad_y);
        let g_n1 = self.attention.backward(&cache.attn, &g_h, &mut grad.attention);
        let mut g_x = self.norm1.backward(&cache.n1, &g_n1, &mut grad.norm1);
        g_x.add_assign(&g_h);
        g_x
    }
}

impl Module for TransformerBlock {
    fn params(&self) -> Vec<&Tensor2> {
        let mut p = self.norm1.params();
        p.extend(self.attention.params());
        p.extend(self.norm2.params());
        p.extend(self.ff_in.params());
        p.extend(self.ff_out.params());
        p
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        let mut p = self.norm1.params_mut();
        p.extend(self.attention.params_mut());
        p.extend(self.norm2.params_mut());
        p.extend(self.ff_in.params_mut());
        p.extend(self.ff_out.params_mut());
        p
    }
}

/// Sinusoidal position table, `len x width`.
pub fn sinusoidal_positions(len: usize, width: usize) -> Tensor2 {
    Tensor2::from_fn(len, width, |pos, j| {
        let pair = (j / 2) as f64;
        let angle = pos as f64 / 10000f64.powf(2.0 * pair / width as f64);
        if j % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}
