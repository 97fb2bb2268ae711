//! Model implementations and the training-facing trait they share.

pub mod checkpoint;
pub mod embed_mlp;
pub mod exnet;

pub use embed_mlp::{embed_mlp_train, EmbedMlpConfig, EmbedMlpModel};
pub use exnet::{exnet_train, ExNetConfig, ExNetModel, TaskLoss};

use crate::error::Result;
use crate::losses::LossBundle;
use crate::nn::TensorRef;
use crate::rng::SeededRng;
use crate::Mat;

/// What the training loop needs from a model.
pub trait Model {
    /// Forward and backward over one batch. Gradients are zeroed, recomputed
    /// and left in the model's grad buffers; returns the batch losses.
    fn train_batch(
        &mut self,
        ids: &[usize],
        x: &Mat,
        labels: &[usize],
        dropout_rng: &mut SeededRng,
    ) -> Result<LossBundle>;

    /// Inference-mode class probabilities.
    fn predict(&self, ids: &[usize], x: &Mat) -> Result<Mat>;

    /// Task loss on already-predicted probabilities (cross-entropy or focal,
    /// per the model's config); used for validation scoring.
    fn task_loss(&self, pred: &Mat, labels: &[usize]) -> Result<f64>;

    /// All state tensors, trainable ones carrying grad buffers.
    fn tensors(&mut self) -> Vec<TensorRef<'_>>;
}

/// Copy of every state tensor of a model (parameters and running stats).
pub fn snapshot<M: Model + ?Sized>(model: &mut M) -> Vec<Vec<f64>> {
    model.tensors().iter().map(|t| t.data.to_vec()).collect()
}

/// Restore a snapshot taken with [`snapshot`].
pub fn restore<M: Model + ?Sized>(model: &mut M, saved: &[Vec<f64>]) {
    let mut tensors = model.tensors();
    assert_eq!(tensors.len(), saved.len(), "snapshot shape mismatch");
    for (t, s) in tensors.iter_mut().zip(saved.iter()) {
        t.data.copy_from_slice(s);
    }
}
