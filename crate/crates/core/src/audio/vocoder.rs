use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{resample_to_len, AudioBuffer, AudioError};
use crate::dsp::{hann, wrap_phase, RealFft, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocoderConfig {
    pub n_fft: usize,
    pub hop: usize,
}

impl Default for VocoderConfig {
    fn default() -> Self {
        Self {
            n_fft: 2048,
            hop: 512,
        }
    }
}

/// Phase-vocoder time stretch with the default analysis setup. `factor > 1` lengthens.
pub fn time_stretch(buffer: &AudioBuffer, factor: f64) -> Result<AudioBuffer, AudioError> {
    time_stretch_with(buffer, factor, VocoderConfig::default())
}

/// Output has exactly `round(len * factor)` samples.
pub fn time_stretch_with(
    buffer: &AudioBuffer,
    factor: f64,
    cfg: VocoderConfig,
) -> Result<AudioBuffer, AudioError> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(AudioError::InvalidParameter(format!(
            "stretch factor {factor}"
        )));
    }
    if cfg.n_fft < 4 || cfg.hop == 0 || cfg.hop > cfg.n_fft / 2 {
        return Err(AudioError::InvalidParameter(format!(
            "vocoder n_fft {} hop {}",
            cfg.n_fft, cfg.hop
        )));
    }
    if !(0.8..=1.2).contains(&factor) {
        log::warn!("time stretch factor {factor} is outside the usual [0.8, 1.2]");
    }
    let out_len = (buffer.len() as f64 * factor).round() as usize;
    let sr = buffer.sample_rate();
    if buffer.is_empty() {
        return AudioBuffer::new(sr, Vec::new());
    }

    let (n, h) = (cfg.n_fft, cfg.hop);
    let mut padded = vec![0.0f64; buffer.len() + 2 * n];
    for (d, &s) in padded[n..].iter_mut().zip(buffer.samples()) {
        *d = f64::from(s);
    }
    let window = hann(n);
    let mut fft = RealFft::new(n);
    let bins = fft.bins();

    let n_frames = 1 + (padded.len() - n) / h;
    let mut spectra = vec![C64::new(0.0, 0.0); n_frames * bins];
    let mut frame = vec![0.0; n];
    for t in 0..n_frames {
        for (i, f) in frame.iter_mut().enumerate() {
            *f = padded[t * h + i] * window[i];
        }
        fft.forward(&frame, &mut spectra[t * bins..(t + 1) * bins]);
    }

    let omega: Vec<f64> = (0..bins)
        .map(|b| 2.0 * PI * b as f64 * h as f64 / n as f64)
        .collect();
    let mut phase: Vec<f64> = spectra[..bins].iter().map(|c| c.arg()).collect();
    let rate = 1.0 / factor;
    let n_out_frames = ((n_frames - 1) as f64 / rate).ceil() as usize;

    let total = (n_out_frames + 1) * h + n;
    let mut y = vec![0.0f64; total];
    let mut wsum = vec![0.0f64; total];
    let mut half = vec![C64::new(0.0, 0.0); bins];
    let mut synth = vec![0.0; n];
    let mut mags = vec![0.0; bins];
    let mut out_phases = vec![0.0; bins];
    let mut peaks: Vec<usize> = Vec::new();
    for j in 0..n_out_frames {
        let s = j as f64 * rate;
        let k = (s.floor() as usize).min(n_frames - 2);
        let a = s - k as f64;
        let (s0, s1) = (
            &spectra[k * bins..(k + 1) * bins],
            &spectra[(k + 1) * bins..(k + 2) * bins],
        );
        for b in 0..bins {
            mags[b] = (1.0 - a) * s0[b].norm() + a * s1[b].norm();
        }
        // identity phase locking: bins take their nearest peak's phase plus the analysis
        // phase offset to that peak, so a partial's main lobe stays coherent
        let reference = if a < 0.5 { s0 } else { s1 };
        peaks.clear();
        for b in 0..bins {
            let lo = b.saturating_sub(2);
            let hi = (b + 2).min(bins - 1);
            if mags[b] > 0.0
                && (lo..=hi).all(|o| o == b || mags[o] < mags[b] || (mags[o] == mags[b] && o > b))
            {
                peaks.push(b);
            }
        }
        let mut pi = 0;
        for b in 0..bins {
            let out_phase = if peaks.is_empty() {
                phase[b]
            } else {
                while pi + 1 < peaks.len()
                    && (peaks[pi + 1] as f64) <= b as f64 + (peaks[pi + 1] - peaks[pi]) as f64 / 2.0
                {
                    pi += 1;
                }
                let p = peaks[pi];
                phase[p] + reference[b].arg() - reference[p].arg()
            };
            half[b] = C64::from_polar(mags[b], out_phase);
            out_phases[b] = out_phase;
        }
        for b in 0..bins {
            let dphi = wrap_phase(s1[b].arg() - s0[b].arg() - omega[b]);
            phase[b] = out_phases[b] + omega[b] + dphi;
        }
        fft.inverse(&half, &mut synth);
        let off = j * h;
        for i in 0..n {
            y[off + i] += synth[i] * window[i];
            wsum[off + i] += window[i] * window[i];
        }
    }
    let wmax = wsum.iter().cloned().fold(0.0, f64::max);
    for (v, w) in y.iter_mut().zip(&wsum) {
        if *w > 1e-3 * wmax {
            *v /= w;
        }
    }

    let start = (n as f64 * factor).round() as usize;
    let samples: Vec<f32> = (0..out_len)
        .map(|i| y.get(start + i).copied().unwrap_or(0.0) as f32)
        .collect();
    AudioBuffer::new(sr, samples)
}

/// Shifts pitch by `semitones` while keeping the duration: stretch by `2^(s/12)`, then
/// resample back onto the original length.
pub fn pitch_shift(buffer: &AudioBuffer, semitones: f64) -> Result<AudioBuffer, AudioError> {
    if !semitones.is_finite() {
        return Err(AudioError::InvalidParameter(format!(
            "pitch shift {semitones}"
        )));
    }
    if semitones.abs() > 3.0 {
        log::warn!("pitch shift {semitones} st is outside the usual [-3, 3]");
    }
    let ratio = 2f64.powf(semitones / 12.0);
    let stretched = time_stretch_with(buffer, ratio, VocoderConfig::default())?;
    AudioBuffer::new(
        buffer.sample_rate(),
        resample_to_len(stretched.samples(), buffer.len()),
    )
}
