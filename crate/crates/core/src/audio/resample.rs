use std::f64::consts::PI;

use super::AudioBuffer;

const HALF_TAPS: isize = 16;

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Resamples `input` so that output sample `n` sits at input position `n * step`.
/// Windowed-sinc interpolation, 32 taps, Hann window; the cutoff drops to `1/step` when
/// downsampling. Weights are normalized to unit sum so DC passes unchanged.
fn interpolate(input: &[f32], out_len: usize, step: f64) -> Vec<f32> {
    let fc = (1.0 / step).min(1.0);
    let n_in = input.len() as isize;
    let mut out = Vec::with_capacity(out_len);
    let mut weights = [0.0f64; (2 * HALF_TAPS) as usize];
    for n in 0..out_len {
        let pos = n as f64 * step;
        let base = pos.floor() as isize;
        let mut wsum = 0.0;
        for (k, w) in weights.iter_mut().enumerate() {
            let j = base - HALF_TAPS + 1 + k as isize;
            let tau = pos - j as f64;
            let u = tau / HALF_TAPS as f64;
            let win = if u.abs() < 1.0 {
                0.5 * (1.0 + (PI * u).cos())
            } else {
                0.0
            };
            *w = fc * sinc(fc * tau) * win;
            wsum += *w;
        }
        let mut acc = 0.0;
        for (k, w) in weights.iter().enumerate() {
            let j = base - HALF_TAPS + 1 + k as isize;
            if (0..n_in).contains(&j) {
                acc += w * f64::from(input[j as usize]);
            }
        }
        out.push(if wsum.abs() > 1e-12 { acc / wsum } else { acc } as f32);
    }
    out
}

/// Converts `buffer` to `target_rate`. Output length is `round(len * target / source)`.
pub fn resample(buffer: &AudioBuffer, target_rate: u32) -> AudioBuffer {
    let src = buffer.sample_rate();
    if src == target_rate || target_rate == 0 {
        return buffer.clone();
    }
    let out_len = (buffer.len() as f64 * f64::from(target_rate) / f64::from(src)).round() as usize;
    let step = f64::from(src) / f64::from(target_rate);
    AudioBuffer::new(target_rate, interpolate(buffer.samples(), out_len, step))
        .expect("interpolation of finite samples is finite")
}

/// Stretches or squeezes `samples` onto exactly `out_len` samples.
pub fn resample_to_len(samples: &[f32], out_len: usize) -> Vec<f32> {
    if out_len == samples.len() {
        return samples.to_vec();
    }
    if out_len == 0 || samples.is_empty() {
        return vec![0.0; out_len];
    }
    interpolate(samples, out_len, samples.len() as f64 / out_len as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone_amplitude(x: &[f32], sr: f64, f: f64) -> f64 {
        // least-squares amplitude of a sinusoid at f over the central half
        let (a, b) = (x.len() / 4, 3 * x.len() / 4);
        let (mut s, mut c) = (0.0, 0.0);
        for (i, &v) in x.iter().enumerate().take(b).skip(a) {
            let ph = 2.0 * PI * f * i as f64 / sr;
            s += f64::from(v) * ph.sin();
            c += f64::from(v) * ph.cos();
        }
        2.0 * (s * s + c * c).sqrt() / (b - a) as f64
    }

    #[test]
    fn lengths_and_identity() {
        let b = AudioBuffer::sine(48_000, 4800, 440.0, 0.5);
        let r = resample(&b, 44_100);
        assert_eq!(r.len(), 4410);
        assert_eq!(r.sample_rate(), 44_100);
        assert_eq!(resample(&b, 48_000), b);
    }

    #[test]
    fn tone_survives_rate_change() {
        let b = AudioBuffer::sine(48_000, 9600, 1000.0, 0.5);
        let r = resample(&b, 44_100);
        let amp = tone_amplitude(r.samples(), 44_100.0, 1000.0);
        assert!((amp - 0.5).abs() < 0.01, "{amp}");
    }

    #[test]
    fn downsampling_attenuates_above_new_nyquist() {
        let b = AudioBuffer::sine(44_100, 8820, 15_000.0, 0.5);
        let r = resample(&b, 16_000);
        assert!(r.rms() < 0.05 * b.rms(), "{}", r.rms());
    }

    #[test]
    fn dc_passes() {
        let x = vec![0.25f32; 1000];
        let y = resample_to_len(&x, 777);
        assert_eq!(y.len(), 777);
        for v in &y[20..750] {
            assert!((v - 0.25).abs() < 1e-6);
        }
    }
}
