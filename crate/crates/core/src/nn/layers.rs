use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Module, Tensor2};

/// Affine layer `y = x W + b` with `W: in x out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Tensor2,
    pub bias: Tensor2,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        Self { weight: Tensor2::glorot(fan_in, fan_out, rng), bias: Tensor2::zeros(1, fan_out) }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.rows
    }

    pub fn fan_out(&self) -> usize {
        self.weight.cols
    }

    pub fn forward(&self, x: &Tensor2) -> Tensor2 {
        x.matmul(&self.weight).add_row(&self.bias)
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &Tensor2, grad_y: &Tensor2, grad: &mut Dense) -> Tensor2 {
        grad.weight.add_assign(&x.t_matmul(grad_y));
        grad.bias.add_assign(&grad_y.sum_rows());
        grad_y.matmul_t(&self.weight)
    }
}

impl Module for Dense {
    fn params(&self) -> Vec<&Tensor2> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Per-row layer normalization with learned gain and shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gamma: Tensor2,
    pub beta: Tensor2,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    normalized: Tensor2,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        Self { gamma: Tensor2::filled(1, dim, 1.0), beta: Tensor2::zeros(1, dim), eps: 1e-5 }
    }

    pub fn forward(&self, x: &Tensor2) -> (Tensor2, LayerNormCache) {
        let d = x.cols as f64;
        let mut normalized = Tensor2::zeros(x.rows, x.cols);
        let mut inv_std = Vec::with_capacity(x.rows);
        for i in 0..x.rows {
            let row = x.row(i);
            let mu = row.iter().sum::<f64>() / d;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d;
            let is = 1.0 / (var + self.eps).sqrt();
            for (o, v) in normalized.row_mut(i).iter_mut().zip(row) {
                *o = (v - mu) * is;
            }
            inv_std.push(is);
        }
        let y = Tensor2::from_fn(x.rows, x.cols, |i, j| {
            normalized.at(i, j) * self.gamma.data[j] + self.beta.data[j]
        });
        (y, LayerNormCache { normalized, inv_std })
    }

    pub fn backward(&self, cache: &LayerNormCache, grad_y: &Tensor2, grad: &mut LayerNorm) -> Tensor2 {
        let xhat = &cache.normalized;
        grad.gamma.add_assign(&grad_y.hadamard(xhat).sum_rows());
        grad.beta.add_assign(&grad_y.sum_rows());
        let d = grad_y.cols as f64;
        let mut gx = Tensor2::zeros(grad_y.rows, grad_y.cols);
        for i in 0..grad_y.rows {
            let gxhat: Vec<f64> = grad_y.row(i).iter().zip(&self.gamma.data).map(|(g, w)| g * w).collect();
            let mean_g = gxhat.iter().sum::<f64>() / d;
            let mean_gx = gxhat.iter().zip(xhat.row(i)).map(|(g, x)| g * x).sum::<f64>() / d;
            let is = cache.inv_std[i];
            for ((o, g), x) in gx.row_mut(i).iter_mut().zip(&gxhat).zip(xhat.row(i)) {
                *o = is * (g - mean_g - x * mean_gx);
            }
        }
        gx
    }
}

impl Module for LayerNorm {
    fn params(&self) -> Vec<&Tensor2> {
        vec![&self.gamma, &self.beta]
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

pub fn relu(x: &Tensor2) -> Tensor2 {
    x.map(|v| v.max(0.0))
}

pub fn relu_backward(x: &Tensor2, grad_y: &Tensor2) -> Tensor2 {
    x.zip_map(grad_y, |v, g| if v > 0.0 { g } else { 0.0 })
}

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_CUBIC: f64 = 0.044715;

/// Tanh approximation of GELU.
pub fn gelu(x: &Tensor2) -> Tensor2 {
    x.map(|v| 0.5 * v * (1.0 + (SQRT_2_OVER_PI * (v + GELU_CUBIC * v * v * v)).tanh()))
}

pub fn gelu_backward(x: &Tensor2, grad_y: &Tensor2) -> Tensor2 {
    x.zip_map(grad_y, |v, g| {
        let u = SQRT_2_OVER_PI * (v + GELU_CUBIC * v * v * v);
        let t = u.tanh();
        let du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * v * v);
        g * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du)
    })
}

pub fn tanh(x: &Tensor2) -> Tensor2 {
    x.map(f64::tanh)
}

/// Backward of tanh given its output `y`.
pub fn tanh_backward(y: &Tensor2, grad_y: &Tensor2) -> Tensor2 {
    y.zip_map(grad_y, |t, g| g * (1.0 - t * t))
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax, shifted by the row maximum.
pub fn softmax_rows(x: &Tensor2) -> Tensor2 {
    let mut out = x.clone();
    for i in 0..out.rows {
        let row = out.row_mut(i);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
    out
}

/// Backward of [`softmax_rows`] given its output `y`.
pub fn softmax_rows_backward(y: &Tensor2, grad_y: &Tensor2) -> Tensor2 {
    let mut gx = Tensor2::zeros(y.rows, y.cols);
    for i in 0..y.rows {
        let dot: f64 = y.row(i).iter().zip(grad_y.row(i)).map(|(a, b)| a * b).sum();
        for ((o, yv), g) in gx.row_mut(i).iter_mut().zip(y.row(i)).zip(grad_y.row(i)) {
            *o = yv * (g - dot);
        }
    }
    gx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Tensor2 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor2::from_fn(rows, cols, |_, _| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let y = softmax_rows(&random(5, 7, 1).scale(30.0));
        for i in 0..5 {
            assert!((y.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn layernorm_standardizes_rows() {
        let ln = LayerNorm { eps: 0.0, ..LayerNorm::new(6) };
        let (y, _) = ln.forward(&random(4, 6, 2).scale(10.0));
        for i in 0..4 {
            let r = y.row(i);
            let mu = r.iter().sum::<f64>() / 6.0;
            let var = r.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / 6.0;
            assert!(mu.abs() < 1e-9 && (var - 1.0).abs() < 1e-9);
        }
    }

    /// Central-difference check of an elementwise map's backward.
    fn check_elementwise(f: impl Fn(&Tensor2) -> Tensor2, back: impl Fn(&Tensor2, &Tensor2) -> Tensor2) {
        let x = random(3, 4, 3);
        let g = random(3, 4, 4);
        let analytic = back(&x, &g);
        let h = 1e-6;
        for k in 0..x.data.len() {
            let mut xp = x.clone();
            xp.data[k] += h;
            let mut xm = x.clone();
            xm.data[k] -= h;
            let num = (f(&xp).hadamard(&g).sum() - f(&xm).hadamard(&g).sum()) / (2.0 * h);
            assert!((num - analytic.data[k]).abs() < 1e-7, "{k}: {num} vs {}", analytic.data[k]);
        }
    }

    #[test]
    fn activation_backwards() {
        check_elementwise(gelu, gelu_backward);
        check_elementwise(tanh, |x, g| tanh_backward(&tanh(x), g));
        check_elementwise(softmax_rows, |x, g| softmax_rows_backward(&softmax_rows(x), g));
        check_elementwise(relu, relu_backward);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!((sigmoid(0.3) + sigmoid(-0.3) - 1.0).abs() < 1e-15);
    }
}
