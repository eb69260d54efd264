//! Single-head attention classifier with hand-written reverse mode.
//!
//! All arithmetic is 64-bit. Weights are `in × out` and act on row vectors.

mod adam;
mod attention;
mod gradcheck;
mod loss;
mod model;
mod params;

use thiserror::Error;

pub use adam::{adam_step, AdamState};
pub use attention::{attention_forward, AttentionOutput};
pub use gradcheck::{
    check_batch_gradients, grad_check, grad_check_with, relative_error, tiny_problem, GradCheckOptions,
    GradCheckReport, TensorCheck, FD_STEP, GRAD_TOLERANCE,
};
pub use loss::{inverse_frequency_weights, predict, weighted_cross_entropy};
pub use model::{backward, model_forward, AttentionMode, BatchInput, ForwardTrace, SequenceBatch, LAYER_NORM_EPS};
pub use params::{
    read_model, read_model_from, write_model, write_model_to, Activation, HyperParams, ModelDims, ModelHeader,
    ModelParams, DEFAULT_HIDDEN, MODEL_MAGIC, NUM_CLASSES, TENSOR_NAMES,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("sample {sample} has no valid positions")]
    AllMasked { sample: usize },
    #[error("cross attention needs key/value sequences")]
    MissingKeyValue,
    #[error("invalid hyper-parameters: {0}")]
    InvalidHyperParams(String),
    #[error("bad model file: {0}")]
    BadModelFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
