use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{FlowError, LatentSeq};
use crate::spectral::{MelConfig, MelSpectrogram};

/// Per-channel corpus statistics of log-mel frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl CodecStats {
    /// Channels whose spread is below this use a unit scale.
    pub const MIN_STD: f64 = 1e-6;

    /// Two-pass mean and population standard deviation per channel.
    pub fn fit<'a, I>(mels: I) -> Result<Self, FlowError>
    where
        I: IntoIterator<Item = &'a MelSpectrogram>,
    {
        let mels: Vec<&MelSpectrogram> = mels.into_iter().collect();
        let Some(first) = mels.first() else {
            return Err(FlowError::InvalidConfig("codec statistics need at least one frame".into()));
        };
        let d = first.n_mels();
        if let Some(m) = mels.iter().find(|m| m.n_mels() != d) {
            return Err(FlowError::Width {
                what: "mel channels",
                expected: d,
                got: m.n_mels(),
            });
        }
        let n: usize = mels.iter().map(|m| m.n_frames()).sum();
        if n == 0 {
            return Err(FlowError::InvalidConfig("codec statistics need at least one frame".into()));
        }
        let rows = || mels.iter().flat_map(|m| m.frames().rows().into_iter());
        let mut mean = vec![0.0; d];
        for row in rows() {
            for (acc, &v) in mean.iter_mut().zip(row) {
                *acc += f64::from(v);
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for row in rows() {
            for ((acc, &v), m) in var.iter_mut().zip(row).zip(&mean) {
                *acc += (f64::from(v) - m).powi(2);
            }
        }
        let std = var
            .iter()
            .map(|v| match (v / n as f64).sqrt() {
                s if s < Self::MIN_STD => 1.0,
                s => s,
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Identity codec with per-channel standardization: latent frame = (mel frame − mean) / std.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LatentCodec {
    pub stats: Option<CodecStats>,
}

impl LatentCodec {
    pub fn with_stats(stats: CodecStats) -> Self {
        Self { stats: Some(stats) }
    }

    fn stats_for(&self, channels: usize) -> Result<&CodecStats, FlowError> {
        let s = self.stats.as_ref().ok_or(FlowError::MissingStats)?;
        if s.dim() != channels {
            return Err(FlowError::Width {
                what: "codec channels",
                expected: s.dim(),
                got: channels,
            });
        }
        Ok(s)
    }

    pub fn encode(&self, mel: &MelSpectrogram) -> Result<LatentSeq, FlowError> {
        let s = self.stats_for(mel.n_mels())?;
        let out = Array2::from_shape_fn(mel.frames().dim(), |(i, j)| {
            (f64::from(mel.frames()[[i, j]]) - s.mean[j]) / s.std[j]
        });
        LatentSeq::new(out)
    }

    /// Inverse of [`LatentCodec::encode`]. Values are rounded to `f32` before the mel
    /// quantizer runs, which makes `decode(encode(m)) == m` exact; generated latents below
    /// the log floor are clamped to it.
    pub fn decode(&self, latent: &LatentSeq, config: MelConfig) -> Result<MelSpectrogram, FlowError> {
        let s = self.stats_for(latent.dim())?;
        let floor = config.log_floor_value();
        let v = latent.values();
        let out = Array2::from_shape_fn(v.dim(), |(i, j)| {
            let x = (v[[i, j]] * s.std[j] + s.mean[j]).max(floor);
            f64::from(x as f32)
        });
        MelSpectrogram::from_f64(config, &out).map_err(|e| FlowError::State(e.to_string()))
    }
}
