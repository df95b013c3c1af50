use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ConditioningError, FrameFeatures};

pub const MASK_RATIO_MIN: f64 = 0.20;
pub const MASK_RATIO_MAX: f64 = 0.75;

/// Half-open masked frame span.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PromptMask {
    pub start: usize,
    pub end: usize,
    /// `(end - start) / T`.
    pub ratio: f64,
}

/// Zeroes one contiguous span of `round(r * T)` frames and clears its validity, with
/// `r ~ U[0.20, 0.75]` unless `forced_ratio` is given. The span start is uniform over all
/// positions where it fits.
pub fn mask_prompt<R: Rng + ?Sized>(
    mel: &FrameFeatures,
    rng: &mut R,
    forced_ratio: Option<f64>,
) -> Result<(FrameFeatures, PromptMask), ConditioningError> {
    let t = mel.n_frames();
    if t < 4 {
        return Err(ConditioningError::TooFewFrames(t));
    }
    let ratio = match forced_ratio {
        Some(r) if (MASK_RATIO_MIN..=MASK_RATIO_MAX).contains(&r) => r,
        Some(r) => {
            return Err(ConditioningError::InvalidParameter(format!(
                "mask ratio {r} outside [{MASK_RATIO_MIN}, {MASK_RATIO_MAX}]"
            )))
        }
        None => rng.random_range(MASK_RATIO_MIN..=MASK_RATIO_MAX),
    };
    let len = ((ratio * t as f64).round() as usize).clamp(1, t);
    let start = rng.random_range(0..=t - len);
    let end = start + len;

    let mut frames = mel.frames().clone();
    let mut valid = mel.valid().to_vec();
    for i in start..end {
        frames.row_mut(i).fill(0.0);
        valid[i] = false;
    }
    Ok((
        FrameFeatures::new(frames, valid)?,
        PromptMask {
            start,
            end,
            ratio: len as f64 / t as f64,
        },
    ))
}
