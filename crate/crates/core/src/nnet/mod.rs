//! Small CPU neural-network kernel: tensors, a tape-based autograd graph,
//! the layers used by the recognition stages, losses, AdamW and a binary
//! model container.

pub mod gradcheck;
pub mod graph;
pub mod init;
pub mod io;
pub mod layers;
pub mod loss;
pub mod optim;
pub mod tensor;
pub mod train;

pub use graph::{Grads, Graph, ParamGrads, ParamId, ParamSet, Var};
pub use io::{load_model, save_model, ModelFile};
pub use layers::{AttentionPool, BiLstm, ConvBlock, Dense, LayerNorm, Lstm, Mha, TransformerLayer};
pub use loss::{class_balanced_ce, class_weights, weighted_bce};
pub use optim::{clip_grad_norm, cosine_lr, AdamW};
pub use tensor::{matmul, Tensor};
pub use train::{fit, Plateau, TrainConfig, TrainReport, Trainer};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("{layer}: expected {expected}, got {got:?}")]
    Shape {
        layer: String,
        expected: String,
        got: Vec<usize>,
    },
    #[error("missing parameter '{0}'")]
    MissingParam(String),
    #[error("model format: {0}")]
    Format(String),
    #[error("sequence of length {len} exceeds capacity {max}")]
    Capacity { len: usize, max: usize },
    #[error("data: {0}")]
    Data(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn shape_err(layer: &str, expected: impl Into<String>, got: &[usize]) -> NnError {
    NnError::Shape {
        layer: layer.to_string(),
        expected: expected.into(),
        got: got.to_vec(),
    }
}
