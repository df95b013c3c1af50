use ndarray::{Array2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::stft::{analyze, synthesize};
use super::{mel_filterbank, MelSpectrogram, SpectralError};
use crate::audio::AudioBuffer;
use crate::dsp::C64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GriffinLimConfig {
    pub iterations: usize,
    /// Projected-gradient steps for the mel-to-linear NNLS.
    pub nnls_steps: usize,
    /// Seeds the initial phase.
    pub seed: u64,
}

impl Default for GriffinLimConfig {
    fn default() -> Self {
        Self {
            iterations: 60,
            nnls_steps: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GriffinLimOutput {
    pub audio: AudioBuffer,
    /// Relative linear-magnitude mismatch `||X| - M| / |M|` after each iteration.
    pub error_trace: Vec<f64>,
}

pub fn griffin_lim(target: &MelSpectrogram, iterations: usize) -> Result<AudioBuffer, SpectralError> {
    Ok(griffin_lim_with(
        target,
        &GriffinLimConfig {
            iterations,
            ..GriffinLimConfig::default()
        },
    )?
    .audio)
}

/// Non-negative least squares `min ||F s - p||` per frame by projected gradient, with
/// step `1 / (||F||_1 ||F||_inf)` (an upper bound on the Lipschitz constant of `F^T F`).
/// Columns are frames.
fn nnls(fb: &Array2<f64>, p: &Array2<f64>, steps: usize) -> Array2<f64> {
    let col_sums = fb.sum_axis(ndarray::Axis(0));
    let mut s = fb.t().dot(p);
    for (mut row, &c) in s.rows_mut().into_iter().zip(col_sums.iter()) {
        if c > 0.0 {
            row.mapv_inplace(|v| v / c);
        } else {
            row.fill(0.0);
        }
    }
    let norm1 = col_sums.iter().cloned().fold(0.0, f64::max);
    let norm_inf = fb
        .rows()
        .into_iter()
        .map(|r| r.sum())
        .fold(0.0, f64::max);
    let step = 1.0 / (norm1 * norm_inf);
    let ftf = fb.t().dot(fb);
    let ftp = fb.t().dot(p);
    for _ in 0..steps {
        let grad = ftf.dot(&s) - &ftp;
        Zip::from(&mut s).and(&grad).for_each(|v, &g| *v = (*v - step * g).max(0.0));
    }
    s
}

/// Inverts a log-mel spectrogram to audio: NNLS back to linear power, then Griffin–Lim
/// phase retrieval from a seeded random phase. Output has `(T - 1) * hop + n_fft` samples.
pub fn griffin_lim_with(
    target: &MelSpectrogram,
    cfg: &GriffinLimConfig,
) -> Result<GriffinLimOutput, SpectralError> {
    let mc = *target.config();
    if cfg.iterations == 0 {
        return Err(SpectralError::InvalidConfig("griffin-lim needs at least one iteration".into()));
    }
    let len = mc.n_samples(target.n_frames());
    let mel_power = target.power();
    if mel_power.iter().all(|&p| p == 0.0) {
        return Ok(GriffinLimOutput {
            audio: AudioBuffer::silence(mc.sample_rate, len),
            error_trace: vec![0.0; cfg.iterations],
        });
    }
    let fb = mel_filterbank(&mc)?;
    let linear_power = nnls(&fb, &mel_power.t().to_owned(), cfg.nnls_steps);
    let mag: Array2<f64> = linear_power.t().mapv(f64::sqrt);
    let mag_norm = mag.iter().map(|v| v * v).sum::<f64>().sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut spec = mag.mapv(|m| {
        let ph: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        C64::from_polar(m, ph)
    });
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut signal = Vec::new();
    for _ in 0..cfg.iterations {
        signal = synthesize(&spec, mc.n_fft, mc.hop, mc.window);
        let rebuilt = analyze(&signal, mc.n_fft, mc.hop, mc.window);
        let mut err = 0.0;
        Zip::from(&mut spec)
            .and(&rebuilt)
            .and(&mag)
            .for_each(|s, r, &m| {
                err += (r.norm() - m).powi(2);
                let n = r.norm();
                *s = if n > 0.0 { r * (m / n) } else { C64::new(m, 0.0) };
            });
        let rel = if mag_norm > 0.0 { err.sqrt() / mag_norm } else { 0.0 };
        if let Some(&prev) = trace.last() {
            if rel > prev * (1.0 + 1e-9) {
                log::warn!("griffin-lim error rose from {prev} to {rel}");
            }
        }
        trace.push(rel);
    }
    let samples: Vec<f32> = signal.iter().map(|&v| v as f32).collect();
    let audio = AudioBuffer::new(mc.sample_rate, samples)
        .map_err(|e| SpectralError::InvalidValue(e.to_string()))?;
    Ok(GriffinLimOutput {
        audio,
        error_trace: trace,
    })
}
