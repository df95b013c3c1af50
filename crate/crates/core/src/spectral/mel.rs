use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use ndarray::Array2;

use super::stft::analyze;
use super::{MelConfig, SpectralError};
use crate::audio::AudioBuffer;

/// HTK mel scale.
pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// The `n_mels + 2` band edges, equally spaced in mel between `f_min` and `f_max`.
fn band_edges(cfg: &MelConfig) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max));
    (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect()
}

/// Peak frequency (Hz) of each mel filter.
pub fn mel_center_frequencies(cfg: &MelConfig) -> Vec<f64> {
    let e = band_edges(cfg);
    e[1..=cfg.n_mels].to_vec()
}

type FilterKey = (u32, usize, usize, u64, u64);

fn cache() -> &'static RwLock<HashMap<FilterKey, Arc<Array2<f64>>>> {
    static CACHE: OnceLock<RwLock<HashMap<FilterKey, Arc<Array2<f64>>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Triangular filters `[n_mels × (n_fft/2 + 1)]` with unit peaks. Cached per config.
pub fn mel_filterbank(cfg: &MelConfig) -> Result<Arc<Array2<f64>>, SpectralError> {
    cfg.validate()?;
    let key = (
        cfg.sample_rate,
        cfg.n_fft,
        cfg.n_mels,
        cfg.f_min.to_bits(),
        cfg.f_max.to_bits(),
    );
    if let Some(fb) = cache().read().expect("filterbank cache poisoned").get(&key) {
        return Ok(fb.clone());
    }
    let fb = Arc::new(build_filterbank(cfg)?);
    cache()
        .write()
        .expect("filterbank cache poisoned")
        .entry(key)
        .or_insert_with(|| fb.clone());
    Ok(fb)
}

fn build_filterbank(cfg: &MelConfig) -> Result<Array2<f64>, SpectralError> {
    let edges = band_edges(cfg);
    let bins = cfg.n_bins();
    let bin_hz = f64::from(cfg.sample_rate) / cfg.n_fft as f64;
    let mut fb = Array2::zeros((cfg.n_mels, bins));
    for m in 0..cfg.n_mels {
        let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..bins {
            let f = k as f64 * bin_hz;
            let w = if f > l && f <= c {
                (f - l) / (c - l)
            } else if f > c && f < r {
                (r - f) / (r - c)
            } else {
                0.0
            };
            fb[[m, k]] = w;
        }
        if fb.row(m).sum() <= 0.0 {
            return Err(SpectralError::EmptyFilter { index: m });
        }
    }
    Ok(fb)
}

/// Log-mel frames `[T × n_mels]`, natural log of mel power plus `log_floor`.
///
/// Values are stored in single precision. Entries with magnitude below `2^-20` are stored
/// as exactly zero, which keeps the latent codec an exact round-trip.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    config: MelConfig,
    frames: Array2<f32>,
}

pub(crate) const MEL_FLUSH: f64 = 1.0 / 1_048_576.0;

pub(crate) fn quantize_mel_value(v: f64) -> f32 {
    if v.abs() < MEL_FLUSH {
        0.0
    } else {
        v as f32
    }
}

impl MelSpectrogram {
    pub fn new(config: MelConfig, frames: Array2<f32>) -> Result<Self, SpectralError> {
        config.validate()?;
        if frames.ncols() != config.n_mels {
            return Err(SpectralError::ShapeMismatch(
                frames.dim(),
                (frames.nrows(), config.n_mels),
            ));
        }
        let floor = config.log_floor_value() as f32;
        if let Some(v) = frames.iter().find(|v| !v.is_finite() || **v < floor) {
            return Err(SpectralError::InvalidValue(format!(
                "{v} (entries must be finite and at least ln(log_floor) = {floor})"
            )));
        }
        Ok(Self { config, frames })
    }

    /// Builds from double-precision log-mel values, rounding to storage precision.
    pub fn from_f64(config: MelConfig, frames: &Array2<f64>) -> Result<Self, SpectralError> {
        Self::new(config, frames.mapv(quantize_mel_value))
    }

    /// Every entry at the floor, i.e. the log-mel of silence.
    pub fn silence(config: MelConfig, n_frames: usize) -> Result<Self, SpectralError> {
        let floor = quantize_mel_value(config.log_floor_value());
        Self::new(config, Array2::from_elem((n_frames, config.n_mels), floor))
    }

    pub fn config(&self) -> &MelConfig {
        &self.config
    }

    pub fn frames(&self) -> &Array2<f32> {
        &self.frames
    }

    pub fn into_frames(self) -> Array2<f32> {
        self.frames
    }

    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn n_mels(&self) -> usize {
        self.frames.ncols()
    }

    /// Mel power, `exp(L) - log_floor`, clamped at zero.
    pub fn power(&self) -> Array2<f64> {
        let floor = self.config.log_floor;
        self.frames.mapv(|v| (f64::from(v).exp() - floor).max(0.0))
    }
}

pub fn mel_spectrogram(buffer: &AudioBuffer, cfg: &MelConfig) -> Result<MelSpectrogram, SpectralError> {
    cfg.validate()?;
    if buffer.len() < cfg.n_fft {
        return Err(SpectralError::TooShort {
            len: buffer.len(),
            n_fft: cfg.n_fft,
        });
    }
    let x: Vec<f64> = buffer.samples().iter().map(|&s| f64::from(s)).collect();
    let power = analyze(&x, cfg.n_fft, cfg.hop, cfg.window).mapv(|c| c.norm_sqr());
    let fb = mel_filterbank(cfg)?;
    let energies = power.dot(&fb.t());
    let floor = cfg.log_floor;
    MelSpectrogram::from_f64(*cfg, &energies.mapv(|e| (e + floor).ln()))
}
