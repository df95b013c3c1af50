//! Differentiable computation substrate: tensors, a reverse-mode tape, AdamW,
//! binary checkpoints and a finite-difference gradient checker.

mod checkpoint;
mod gradcheck;
pub mod nn;
mod optim;
mod params;
mod tape;
mod tensor;
mod validation;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
};
pub use gradcheck::{gradcheck, gradcheck_sampled, GradcheckReport};
pub use optim::{adamw_step, AdamWConfig};
pub use params::{ParamId, ParamStore, Parameter};
pub use tape::{concat, scaled_dot_product_attention, Gradients, Tape, Var};
pub use tensor::Tensor;
pub use validation::{op_suite, OpCheck, OP_TOLERANCE};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiffError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("shape {shape:?} does not hold {len} values")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("axis {axis} out of range for rank {rank}")]
    Axis { axis: isize, rank: usize },
    #[error("index {index} out of range (len {len})")]
    Index { index: usize, len: usize },
    #[error("expected a one-element tensor, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),
    #[error("duplicate parameter name {0}")]
    DuplicateParameter(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
