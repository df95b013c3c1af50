//! Mono waveforms, WAV I/O and the time-domain transforms used by the data forge.

mod mix;
mod resample;
mod vad;
mod vocoder;
mod wav;

pub use mix::{measure_snr_db, mix_at_snr, Mix};
pub use resample::{resample, resample_to_len};
pub use vad::{vad_activity_ratio, DEFAULT_VAD_FRAME_MS, DEFAULT_VAD_THRESHOLD_DB};
pub use vocoder::{pitch_shift, time_stretch, time_stretch_with, VocoderConfig};
pub use wav::{read_wav, read_wav_at, write_wav, WavFormat};

use std::path::PathBuf;

use thiserror::Error;

/// Session sample rate used when nothing else is configured.
pub const DEFAULT_SAMPLE_RATE: u32 = 44_100;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("file not found: {0}")]
    Missing(PathBuf),
    #[error("unsupported codec in {path}: {detail}")]
    UnsupportedCodec { path: PathBuf, detail: String },
    #[error("truncated container {path}: {detail}")]
    Truncated { path: PathBuf, detail: String },
    #[error("malformed container {path}: {detail}")]
    Malformed { path: PathBuf, detail: String },
    #[error("cannot write {path}: {detail}")]
    Unwritable { path: PathBuf, detail: String },
    #[error("invalid buffer: {0}")]
    InvalidBuffer(String),
    #[error("sample rates differ: {0} vs {1}")]
    SampleRateMismatch(u32, u32),
    #[error(
        "foreground ({fg_len} samples at onset {onset}) overruns background of {bg_len} samples"
    )]
    Overrun {
        onset: usize,
        fg_len: usize,
        bg_len: usize,
    },
    #[error("background is silent over the overlap window; SNR is undefined")]
    SilentBackground,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// A mono waveform. Samples are nominally in `[-1, 1]`; values outside are clipped on write.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    sample_rate: u32,
    samples: Vec<f32>,
}

impl AudioBuffer {
    pub fn new(sample_rate: u32, samples: Vec<f32>) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidBuffer(
                "sample rate must be positive".into(),
            ));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::InvalidBuffer(format!(
                "non-finite sample at index {i}"
            )));
        }
        Ok(Self {
            sample_rate,
            samples,
        })
    }

    pub fn silence(sample_rate: u32, len: usize) -> Self {
        Self::new(sample_rate, vec![0.0; len]).expect("silence is valid")
    }

    /// Fills `len` samples from `f(time_in_seconds)`.
    pub fn from_fn(
        sample_rate: u32,
        len: usize,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self, AudioError> {
        let sr = f64::from(sample_rate);
        Self::new(
            sample_rate,
            (0..len).map(|i| f(i as f64 / sr) as f32).collect(),
        )
    }

    /// A sine of the given frequency and peak amplitude.
    pub fn sine(sample_rate: u32, len: usize, freq_hz: f64, amplitude: f64) -> Self {
        Self::from_fn(sample_rate, len, |t| {
            amplitude * (2.0 * std::f64::consts::PI * freq_hz * t).sin()
        })
        .expect("finite sine")
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn mean_square(&self) -> f64 {
        mean_square(&self.samples)
    }

    pub fn rms(&self) -> f64 {
        self.mean_square().sqrt()
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }

    pub fn scaled(&self, gain: f32) -> Self {
        Self {
            sample_rate: self.sample_rate,
            samples: self.samples.iter().map(|s| s * gain).collect(),
        }
    }
}

pub(crate) fn mean_square(samples: &[f32]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples
        .iter()
        .map(|&s| f64::from(s) * f64::from(s))
        .sum::<f64>()
        / samples.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_buffers() {
        assert!(AudioBuffer::new(0, vec![0.0]).is_err());
        assert!(AudioBuffer::new(8000, vec![0.0, f32::NAN]).is_err());
        let b = AudioBuffer::silence(8000, 4000);
        assert_eq!(b.duration_s(), 0.5);
    }
}
