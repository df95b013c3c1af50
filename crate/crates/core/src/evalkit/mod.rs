//! Evaluation metrics: log-spectral distance, a Fréchet distance over pluggable clip
//! embeddings ("fad-proxy") and the energy distance between sample sets.

mod embed;
mod energy;
mod stats;

pub use embed::{Embedder, MelSummaryEmbedder};
pub use energy::energy_distance;
pub use stats::{embed_stats, frechet_distance, sqrt_psd, EmbeddingStats, EIGEN_FLOOR};

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{read_wav_at, AudioBuffer, AudioError};
use crate::spectral::{lsd, mel_spectrogram, MelConfig, SpectralError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least {need} items, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dim { expected: usize, got: usize },
    #[error("non-finite statistics")]
    NonFinite,
    #[error("invalid statistics: {0}")]
    InvalidStats(String),
    #[error("no common file names between the two sets")]
    NoPairs,
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A named clip.
pub type NamedClip = (String, AudioBuffer);

/// Every `*.wav` in `dir` (not recursive), resampled to `sample_rate`, sorted by name.
pub fn load_folder(dir: &Path, sample_rate: u32) -> Result<Vec<NamedClip>, EvalError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
            Ok((name, read_wav_at(&p, sample_rate)?))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub name: String,
    pub lsd: f64,
}

/// Metrics between a reference set and a candidate set. `null` entries could not be
/// computed (too few clips).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pairs: usize,
    /// Mean log-mel LSD (dB) over clips present in both sets by name.
    pub lsd: Option<f64>,
    #[serde(rename = "fad-proxy")]
    pub fad_proxy: Option<f64>,
    /// Energy distance between the two embedding sets.
    pub energy_distance: Option<f64>,
    pub embedder: String,
    pub items: Vec<ItemScore>,
}

/// Pairs clips by name for LSD (each pair cut to the shorter length) and compares the
/// embedding distributions of the full sets.
pub fn evaluate(
    reference: &[NamedClip],
    candidate: &[NamedClip],
    mel: &MelConfig,
    embedder: &dyn Embedder,
) -> Result<EvalReport, EvalError> {
    let mut items = Vec::new();
    for (name, r) in reference {
        if let Some((_, c)) = candidate.iter().find(|(n, _)| n == name) {
            let n = r.len().min(c.len());
            let cut = |b: &AudioBuffer| AudioBuffer::new(b.sample_rate(), b.samples()[..n].to_vec());
            let d = lsd(&mel_spectrogram(&cut(r)?, mel)?, &mel_spectrogram(&cut(c)?, mel)?)?;
            items.push(ItemScore { name: name.clone(), lsd: d });
        }
    }
    let embed_all = |set: &[NamedClip]| -> Result<Vec<Vec<f64>>, EvalError> {
        set.iter().map(|(_, b)| embedder.embed(&mel_spectrogram(b, mel)?)).collect()
    };
    let (ea, eb) = (embed_all(reference)?, embed_all(candidate)?);
    let fad_proxy = if ea.len() >= 2 && eb.len() >= 2 {
        Some(frechet_distance(&embed_stats(&ea)?, &embed_stats(&eb)?)?)
    } else {
        log::warn!("fad-proxy needs two clips per set, got {} and {}", ea.len(), eb.len());
        None
    };
    let energy = if ea.is_empty() || eb.is_empty() {
        None
    } else {
        Some(energy_distance(&ea, &eb)?)
    };
    if items.is_empty() && fad_proxy.is_none() && energy.is_none() {
        return Err(EvalError::NoPairs);
    }
    Ok(EvalReport {
        pairs: items.len(),
        lsd: (!items.is_empty()).then(|| items.iter().map(|i| i.lsd).sum::<f64>() / items.len() as f64),
        fad_proxy,
        energy_distance: energy,
        embedder: embedder.name().to_string(),
        items,
    })
}
