//! Conditioning streams: the context sequence attended to by cross-attention and the
//! frame-aligned features concatenated with the noisy latent.

mod dropout;
mod high;
mod mask;
mod providers;
mod transcript;

pub use dropout::{condition_dropout, DEFAULT_DROP_PROB};
pub use high::HighStream;
pub use mask::{mask_prompt, PromptMask, MASK_RATIO_MAX, MASK_RATIO_MIN};
pub use providers::{
    read_featseq, write_featseq, MmProvider, NullMmProvider, NullSyncProvider, ReplayMmProvider,
    ReplaySyncProvider, SyncProvider, ToyTokenProvider, FEATSEQ_MAGIC, SYNC_NATIVE_FPS,
};
pub use transcript::{CharVocab, TranscriptEncoder, TRANSCRIPT_KERNEL};

use ndarray::{concatenate, s, Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConditioningError {
    #[error("feature width mismatch: expected {expected}, got {got}")]
    Width { expected: usize, got: usize },
    #[error("frame count mismatch: {0} vs {1}")]
    Frames(usize, usize),
    #[error("validity mask has {mask} entries for {rows} rows")]
    Mask { mask: usize, rows: usize },
    #[error("non-finite feature value")]
    NonFinite,
    #[error("prompt masking needs at least 4 frames, got {0}")]
    TooFewFrames(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("replay: {0}")]
    Replay(String),
    #[error(transparent)]
    Diff(#[from] crate::diffsub::DiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A variable-length sequence of context vectors `[L × D]` with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSeq {
    tokens: Array2<f64>,
    valid: Vec<bool>,
}

impl FeatureSeq {
    pub fn new(tokens: Array2<f64>, valid: Vec<bool>) -> Result<Self, ConditioningError> {
        if valid.len() != tokens.nrows() {
            return Err(ConditioningError::Mask {
                mask: valid.len(),
                rows: tokens.nrows(),
            });
        }
        if !tokens.iter().all(|v| v.is_finite()) {
            return Err(ConditioningError::NonFinite);
        }
        Ok(Self { tokens, valid })
    }

    /// All rows valid.
    pub fn from_tokens(tokens: Array2<f64>) -> Result<Self, ConditioningError> {
        let n = tokens.nrows();
        Self::new(tokens, vec![true; n])
    }

    /// Zero-length sequence of width `dim`.
    pub fn empty(dim: usize) -> Self {
        Self {
            tokens: Array2::zeros((0, dim)),
            valid: Vec::new(),
        }
    }

    pub fn tokens(&self) -> &Array2<f64> {
        &self.tokens
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn len(&self) -> usize {
        self.tokens.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.tokens.ncols()
    }
}

/// Sequence concatenation `[mm ; trans]` of two already width-matched context sequences.
pub fn build_high_stream(mm: &FeatureSeq, trans: &FeatureSeq) -> Result<FeatureSeq, ConditioningError> {
    if mm.dim() != trans.dim() {
        return Err(ConditioningError::Width {
            expected: mm.dim(),
            got: trans.dim(),
        });
    }
    let tokens = concatenate(Axis(0), &[mm.tokens.view(), trans.tokens.view()])
        .expect("widths checked");
    let valid = mm.valid.iter().chain(&trans.valid).copied().collect();
    Ok(FeatureSeq { tokens, valid })
}

/// Per-frame features `[T × D]` aligned with latent frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures {
    frames: Array2<f64>,
    valid: Vec<bool>,
}

impl FrameFeatures {
    pub fn new(frames: Array2<f64>, valid: Vec<bool>) -> Result<Self, ConditioningError> {
        if valid.len() != frames.nrows() {
            return Err(ConditioningError::Mask {
                mask: valid.len(),
                rows: frames.nrows(),
            });
        }
        if !frames.iter().all(|v| v.is_finite()) {
            return Err(ConditioningError::NonFinite);
        }
        Ok(Self { frames, valid })
    }

    pub fn from_frames(frames: Array2<f64>) -> Result<Self, ConditioningError> {
        let n = frames.nrows();
        Self::new(frames, vec![true; n])
    }

    /// Zero features with every frame marked invalid: an absent source.
    pub fn null(n_frames: usize, dim: usize) -> Self {
        Self {
            frames: Array2::zeros((n_frames, dim)),
            valid: vec![false; n_frames],
        }
    }

    pub fn frames(&self) -> &Array2<f64> {
        &self.frames
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }

    /// Zeroes the features and clears validity.
    pub fn nulled(&self) -> Self {
        Self::null(self.n_frames(), self.dim())
    }

    /// Splits channels at `at`, inverting [`build_low_stream`].
    pub fn split_channels(&self, at: usize) -> (Array2<f64>, Array2<f64>) {
        (
            self.frames.slice(s![.., ..at]).to_owned(),
            self.frames.slice(s![.., at..]).to_owned(),
        )
    }
}

/// Channel concatenation `[sync | mel]` per frame. A frame is valid when either source is.
pub fn build_low_stream(
    sync: &FrameFeatures,
    mel: &FrameFeatures,
) -> Result<FrameFeatures, ConditioningError> {
    if sync.n_frames() != mel.n_frames() {
        return Err(ConditioningError::Frames(sync.n_frames(), mel.n_frames()));
    }
    let frames = concatenate(Axis(1), &[sync.frames.view(), mel.frames.view()])
        .expect("frame counts checked");
    let valid = sync.valid.iter().zip(&mel.valid).map(|(a, b)| *a || *b).collect();
    Ok(FrameFeatures { frames, valid })
}

/// Which sources carry real information.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SourceFlags {
    pub mm: bool,
    pub transcript: bool,
    pub sync: bool,
    pub mel: bool,
}

impl SourceFlags {
    pub const NONE: Self = Self {
        mm: false,
        transcript: false,
        sync: false,
        mel: false,
    };
}

/// Everything the velocity model is conditioned on for one example.
///
/// The context stream is kept as its raw sources (frozen multimodal features and the
/// transcript text) because its adapters and the transcript encoder are trainable and
/// belong to the model. The frame-aligned stream is final.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningBundle {
    pub mm: FeatureSeq,
    pub transcript: String,
    pub low: FrameFeatures,
    pub flags: SourceFlags,
}

impl ConditioningBundle {
    /// The unconditional bundle: empty context, zeroed low stream with cleared validity.
    pub fn null(mm_dim: usize, n_frames: usize, low_dim: usize) -> Self {
        Self {
            mm: FeatureSeq::empty(mm_dim),
            transcript: String::new(),
            low: FrameFeatures::null(n_frames, low_dim),
            flags: SourceFlags::NONE,
        }
    }

    /// Same shapes as `self`, all sources nulled.
    pub fn to_null(&self) -> Self {
        Self::null(self.mm.dim(), self.low.n_frames(), self.low.dim())
    }

    pub fn n_frames(&self) -> usize {
        self.low.n_frames()
    }

    /// Context length before adapters: multimodal tokens plus transcript characters.
    pub fn context_len(&self) -> usize {
        self.mm.len() + self.transcript.chars().count()
    }
}
