//! Rectified-flow objective, a small DiT velocity network with configurable conditioning
//! injection, the training loop, the guided ODE sampler and the normalizing latent codec.

mod codec;
mod config;
mod embed;
mod loss;
mod model;
mod path;
mod sampler;
mod state;
pub mod toy;
mod train;

pub use codec::{CodecStats, LatentCodec};
pub use config::{Injection, ModelConfig, SamplerConfig, Solver};
pub use embed::{sinusoidal_features, TimeEmbedding, TIME_MAX_FREQUENCY};
pub use loss::{loss_gradcheck, rf_loss, rf_loss_with, LossDraws, LOSS_GRADCHECK_TOLERANCE};
pub use model::{Dit, VelocityModel};
pub use path::{cfg_velocity, interpolate, target_velocity};
pub use sampler::{sample, sample_batch, sample_with_noise};
pub use state::{FlowModelState, Sidecar};
pub use train::{train, Example, TrainConfig, TrainReport};

use ndarray::Array2;
use thiserror::Error;

use crate::conditioning::ConditioningError;
use crate::diffsub::{DiffError, Tensor};

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("{op}: shapes {lhs:?} and {rhs:?} differ")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("time {0} outside [0, 1]")]
    Time(f64),
    #[error("conditioning has {got} frames but the latent has {expected}")]
    Frames { expected: usize, got: usize },
    #[error("{what} width {got}, model expects {expected}")]
    Width {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("latent must be finite with at least one frame")]
    InvalidLatent,
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss {loss} at step {step}")]
    NonFiniteLoss { step: u64, loss: f64 },
    #[error("codec has no normalization statistics")]
    MissingStats,
    #[error("state: {0}")]
    State(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Conditioning(#[from] ConditioningError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A `[T × D]` latent sequence, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSeq(Array2<f64>);

impl LatentSeq {
    pub fn new(values: Array2<f64>) -> Result<Self, FlowError> {
        if values.nrows() == 0 || !values.iter().all(|v| v.is_finite()) {
            return Err(FlowError::InvalidLatent);
        }
        Ok(Self(values))
    }

    pub fn zeros(frames: usize, dim: usize) -> Result<Self, FlowError> {
        Self::new(Array2::zeros((frames, dim)))
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_values(self) -> Array2<f64> {
        self.0
    }

    pub fn n_frames(&self) -> usize {
        self.0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.dim()
    }

    /// Row-major values as a `[T, D]` tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.n_frames(), self.dim()], self.0.iter().copied().collect())
            .expect("shape matches data")
    }

    pub(crate) fn from_rows(frames: usize, dim: usize, data: Vec<f64>) -> Result<Self, FlowError> {
        let arr = Array2::from_shape_vec((frames, dim), data).map_err(|_| FlowError::InvalidLatent)?;
        Self::new(arr)
    }
}
