use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{mel_spectrogram, stft, MelConfig, MelSpectrogram, SpectralError};
use crate::audio::AudioBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LsdKind {
    #[default]
    Mel,
    Linear,
}

fn frame_mean_rms(diff_db: impl Fn(usize, usize) -> f64, frames: usize, bins: usize) -> f64 {
    if frames == 0 || bins == 0 {
        return 0.0;
    }
    let total: f64 = (0..frames)
        .map(|t| ((0..bins).map(|k| diff_db(t, k).powi(2)).sum::<f64>() / bins as f64).sqrt())
        .sum();
    total / frames as f64
}

/// Log-spectral distance in dB between two log-mel spectrograms: frame mean of the
/// bin-RMS of the level difference. Log-mel entries hold `ln(power + floor)`, so the
/// level in dB is `10 log10` of that argument.
pub fn lsd(a: &MelSpectrogram, b: &MelSpectrogram) -> Result<f64, SpectralError> {
    if a.config() != b.config() {
        return Err(SpectralError::ConfigMismatch);
    }
    if a.frames().dim() != b.frames().dim() {
        return Err(SpectralError::ShapeMismatch(a.frames().dim(), b.frames().dim()));
    }
    let db = 10.0 / std::f64::consts::LN_10;
    let (fa, fb) = (a.frames(), b.frames());
    Ok(frame_mean_rms(
        |t, k| db * (f64::from(fa[[t, k]]) - f64::from(fb[[t, k]])),
        a.n_frames(),
        a.n_mels(),
    ))
}

/// Log-spectral distance between linear magnitude spectrograms, `20 log10(|X| + eps)`.
pub fn lsd_linear(a: &Array2<f64>, b: &Array2<f64>, eps: f64) -> Result<f64, SpectralError> {
    if a.dim() != b.dim() {
        return Err(SpectralError::ShapeMismatch(a.dim(), b.dim()));
    }
    Ok(frame_mean_rms(
        |t, k| 20.0 * ((a[[t, k]] + eps).log10() - (b[[t, k]] + eps).log10()),
        a.nrows(),
        a.ncols(),
    ))
}

/// LSD between two waveforms of equal length under `cfg`.
pub fn lsd_audio(
    a: &AudioBuffer,
    b: &AudioBuffer,
    cfg: &MelConfig,
    kind: LsdKind,
) -> Result<f64, SpectralError> {
    if a.len() != b.len() {
        return Err(SpectralError::ShapeMismatch((a.len(), 1), (b.len(), 1)));
    }
    match kind {
        LsdKind::Mel => lsd(&mel_spectrogram(a, cfg)?, &mel_spectrogram(b, cfg)?),
        LsdKind::Linear => lsd_linear(
            &stft(a, cfg)?.magnitudes(),
            &stft(b, cfg)?.magnitudes(),
            cfg.log_floor,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_mel(seed: u64) -> MelSpectrogram {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let c = MelConfig::default();
        let f = Array2::from_shape_fn((7, 100), |_| rng.random_range(-11.0f32..3.0));
        MelSpectrogram::new(c, f).unwrap()
    }

    #[test]
    fn identity_and_symmetry() {
        let (a, b) = (random_mel(1), random_mel(2));
        assert_eq!(lsd(&a, &a).unwrap(), 0.0);
        assert_eq!(lsd(&a, &b).unwrap(), lsd(&b, &a).unwrap());
        assert!(lsd(&a, &b).unwrap() > 0.0);
    }

    #[test]
    fn tenfold_amplitude_is_twenty_db() {
        // amplitude x10 is power x100; constructed directly in the log domain
        let a = random_mel(3);
        let shifted = a.frames().mapv(|v| (f64::from(v) + 100f64.ln()) as f32);
        let b = MelSpectrogram::new(*a.config(), shifted).unwrap();
        assert!((lsd(&a, &b).unwrap() - 20.0).abs() < 1e-4);

        let m = Array2::from_shape_fn((5, 9), |(t, k)| 0.1 + (t * 9 + k) as f64);
        let m10 = m.mapv(|v| 10.0 * v);
        assert!((lsd_linear(&m, &m10, 0.0).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn mismatches() {
        let a = random_mel(4);
        let c = MelConfig {
            hop: 128,
            ..MelConfig::default()
        };
        let b = MelSpectrogram::new(c, a.frames().clone()).unwrap();
        assert!(matches!(lsd(&a, &b), Err(SpectralError::ConfigMismatch)));
        assert!(lsd_linear(&Array2::zeros((2, 3)), &Array2::zeros((3, 2)), 1e-5).is_err());
    }

    #[test]
    fn audio_variants() {
        let c = MelConfig::default();
        let x = AudioBuffer::sine(44_100, 4096, 440.0, 0.5);
        let y = AudioBuffer::sine(44_100, 4096, 440.0, 0.05);
        assert_eq!(lsd_audio(&x, &x, &c, LsdKind::Linear).unwrap(), 0.0);
        let d = lsd_audio(&x, &y, &c, LsdKind::Mel).unwrap();
        assert!(d > 1.0, "{d}");
    }
}
