use crate::spectral::MelSpectrogram;

use super::EvalError;

/// Maps a log-mel spectrogram to a fixed-width vector.
pub trait Embedder: Send + Sync {
    fn name(&self) -> &str;
    fn embed(&self, mel: &MelSpectrogram) -> Result<Vec<f64>, EvalError>;
}

/// Per mel bin: mean, standard deviation and mean absolute frame-to-frame change of the
/// log-mel values, concatenated (`3 × n_mels` values).
#[derive(Debug, Clone, Copy, Default)]
pub struct MelSummaryEmbedder;

impl Embedder for MelSummaryEmbedder {
    fn name(&self) -> &str {
        "mel-summary"
    }

    fn embed(&self, mel: &MelSpectrogram) -> Result<Vec<f64>, EvalError> {
        let (t, k) = mel.frames().dim();
        if t == 0 {
            return Err(EvalError::TooFew { need: 1, got: 0 });
        }
        let f = mel.frames().mapv(f64::from);
        let mut out = vec![0.0; 3 * k];
        for j in 0..k {
            let col = f.column(j);
            let mean = col.sum() / t as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t as f64;
            let delta = if t > 1 {
                (1..t).map(|i| (col[i] - col[i - 1]).abs()).sum::<f64>() / (t - 1) as f64
            } else {
                0.0
            };
            out[j] = mean;
            out[k + j] = var.sqrt();
            out[2 * k + j] = delta;
        }
        Ok(out)
    }
}
