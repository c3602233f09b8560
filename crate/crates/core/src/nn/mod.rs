//! Small dense/attention network kernel with hand-written backward passes,
//! Adam, and finite-difference gradient checking. Everything is `f64`.
//!
//! Each layer exposes `forward` returning its output (plus a cache where the
//! backward pass needs one) and `backward` which accumulates parameter
//! gradients into a *gradient twin*: a value of the same type whose tensors
//! hold gradients instead of weights.

pub mod attention;
pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod tensor;
pub mod transformer;

pub use attention::{attention_backward, attention_forward, MultiHeadAttention};
pub use gradcheck::grad_check;
pub use layers::{Dense, LayerNorm};
pub use optim::{adam_step, Adam, AdamConfig};
pub use tensor::Tensor2;
pub use transformer::{sinusoidal_positions, TransformerBlock};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

pub type Result<T> = std::result::Result<T, NnError>;

/// A set of trainable tensors in a fixed order.
pub trait Module: Clone {
    fn params(&self) -> Vec<&Tensor2>;
    fn params_mut(&mut self) -> Vec<&mut Tensor2>;

    /// Gradient twin with every tensor zeroed.
    fn zeroed(&self) -> Self {
        let mut z = self.clone();
        for p in z.params_mut() {
            p.fill(0.0);
        }
        z
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.data.len()).sum()
    }

    /// `self += other`, tensor by tensor.
    fn accumulate(&mut self, other: &Self) {
        for (a, b) in self.params_mut().into_iter().zip(other.params()) {
            a.add_assign(b);
        }
    }

    fn scale_params(&mut self, k: f64) {
        for p in self.params_mut() {
            p.scale_assign(k);
        }
    }

    fn all_finite(&self) -> bool {
        self.params().iter().all(|p| p.is_finite())
    }
}
