//! STFT and log-mel front-end, Griffin–Lim inversion and log-spectral distance.

mod dump;
mod griffin_lim;
mod lsd;
mod mel;
mod stft;

pub use dump::{decode_mel_dump, encode_mel_dump, read_mel_dump, write_mel_dump, MEL_DUMP_MAGIC};
pub use griffin_lim::{griffin_lim, griffin_lim_with, GriffinLimConfig, GriffinLimOutput};
pub use lsd::{lsd, lsd_audio, lsd_linear, LsdKind};
pub use mel::{
    hz_to_mel, mel_center_frequencies, mel_filterbank, mel_spectrogram, mel_to_hz,
    MelSpectrogram,
};
pub use stft::{stft, ComplexSpectrogram};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("buffer of {len} samples is shorter than one {n_fft}-sample frame")]
    TooShort { len: usize, n_fft: usize },
    #[error("invalid mel config: {0}")]
    InvalidConfig(String),
    #[error("mel filter {index} covers no FFT bin; n_mels is too large for n_fft")]
    EmptyFilter { index: usize },
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("spectrograms were computed with different configs")]
    ConfigMismatch,
    #[error("invalid spectrogram value: {0}")]
    InvalidValue(String),
    #[error("mel dump: {0}")]
    Dump(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    /// Periodic Hann.
    Hann,
    Rectangular,
}

impl Window {
    pub(crate) fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Hann => crate::dsp::hann(n),
            Window::Rectangular => vec![1.0; n],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub window: Window,
    /// Added to mel power before the natural log.
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            sample_rate: 44_100,
            n_fft: 1024,
            hop: 256,
            n_mels: 100,
            f_min: 0.0,
            f_max: 22_050.0,
            window: Window::Hann,
            log_floor: 1e-5,
        }
    }
}

impl MelConfig {
    /// Default front-end at another sample rate (`f_max` follows Nyquist).
    pub fn at_rate(sample_rate: u32) -> Self {
        Self {
            sample_rate,
            f_max: f64::from(sample_rate) / 2.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SpectralError> {
        let bad = |m: String| Err(SpectralError::InvalidConfig(m));
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive".into());
        }
        if self.n_fft < 2 || self.hop == 0 || self.hop > self.n_fft {
            return bad(format!("need 0 < hop <= n_fft, got hop {} n_fft {}", self.hop, self.n_fft));
        }
        if self.n_mels == 0 {
            return bad("n_mels must be at least 1".into());
        }
        let nyq = f64::from(self.sample_rate) / 2.0;
        if !(self.f_min >= 0.0 && self.f_min < self.f_max && self.f_max <= nyq) {
            return bad(format!(
                "need 0 <= f_min < f_max <= {nyq}, got {} / {}",
                self.f_min, self.f_max
            ));
        }
        if !(self.log_floor > 0.0 && self.log_floor.is_finite()) {
            return bad(format!("log_floor must be positive, got {}", self.log_floor));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Frames produced for `len` samples (non-centered framing); 0 when shorter than a frame.
    pub fn n_frames(&self, len: usize) -> usize {
        if len < self.n_fft {
            0
        } else {
            1 + (len - self.n_fft) / self.hop
        }
    }

    /// Samples spanned by `frames` frames.
    pub fn n_samples(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            (frames - 1) * self.hop + self.n_fft
        }
    }

    pub fn log_floor_value(&self) -> f64 {
        self.log_floor.ln()
    }
}
