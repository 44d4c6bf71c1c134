//! Convolutional denoising autoencoder with a classification head:
//! layers, exact reverse-mode gradients, the joint loss and Adam.

pub mod adam;
pub mod gradcheck;
mod gemm;
pub mod layers;
pub mod loss;
pub mod model;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{loss, LossBreakdown, LossWeights, LOG_CLAMP};
pub use model::{degenerate_to_cnn, Group, Mode, ModelState, NetworkSpec, ParamTensor, Trace, IQ_WIDTH};

impl ModelState {
    /// One Adam step on precomputed gradients.
    pub fn apply_gradients(&mut self, grads: &[Vec<f64>], cfg: &AdamConfig) -> crate::Result<()> {
        adam_step(&mut self.params, grads, &mut self.adam, cfg)
    }
}
