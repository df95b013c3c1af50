use ndarray::Array2;

use super::{MelConfig, SpectralError, Window};
use crate::audio::AudioBuffer;
use crate::dsp::{RealFft, C64};

/// STFT coefficients, `[frames × (n_fft/2 + 1)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub n_fft: usize,
    pub hop: usize,
    pub window: Window,
    pub coefficients: Array2<C64>,
}

impl ComplexSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.coefficients.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.coefficients.ncols()
    }

    pub fn magnitudes(&self) -> Array2<f64> {
        self.coefficients.mapv(|c| c.norm())
    }

    pub fn power(&self) -> Array2<f64> {
        self.coefficients.mapv(|c| c.norm_sqr())
    }
}

/// Frame `t`, bin `k` is the DFT of the windowed segment starting at `t * hop`.
pub fn stft(buffer: &AudioBuffer, cfg: &MelConfig) -> Result<ComplexSpectrogram, SpectralError> {
    cfg.validate()?;
    if buffer.len() < cfg.n_fft {
        return Err(SpectralError::TooShort {
            len: buffer.len(),
            n_fft: cfg.n_fft,
        });
    }
    let x: Vec<f64> = buffer.samples().iter().map(|&s| f64::from(s)).collect();
    Ok(ComplexSpectrogram {
        n_fft: cfg.n_fft,
        hop: cfg.hop,
        window: cfg.window,
        coefficients: analyze(&x, cfg.n_fft, cfg.hop, cfg.window),
    })
}

pub(crate) fn analyze(x: &[f64], n_fft: usize, hop: usize, window: Window) -> Array2<C64> {
    let frames = if x.len() < n_fft {
        0
    } else {
        1 + (x.len() - n_fft) / hop
    };
    let w = window.coefficients(n_fft);
    let mut fft = RealFft::new(n_fft);
    let bins = fft.bins();
    let mut out = Array2::from_elem((frames, bins), C64::new(0.0, 0.0));
    let mut seg = vec![0.0; n_fft];
    let mut row = vec![C64::new(0.0, 0.0); bins];
    for t in 0..frames {
        for (i, s) in seg.iter_mut().enumerate() {
            *s = x[t * hop + i] * w[i];
        }
        fft.forward(&seg, &mut row);
        for (dst, v) in out.row_mut(t).iter_mut().zip(&row) {
            *dst = *v;
        }
    }
    out
}

/// Least-squares inverse STFT: the signal whose STFT is closest to `spec` in Frobenius norm.
pub(crate) fn synthesize(spec: &Array2<C64>, n_fft: usize, hop: usize, window: Window) -> Vec<f64> {
    let frames = spec.nrows();
    if frames == 0 {
        return Vec::new();
    }
    let len = (frames - 1) * hop + n_fft;
    let w = window.coefficients(n_fft);
    let mut fft = RealFft::new(n_fft);
    let mut y = vec![0.0; len];
    let mut wsum = vec![0.0; len];
    let mut seg = vec![0.0; n_fft];
    let mut half: Vec<C64> = vec![C64::new(0.0, 0.0); fft.bins()];
    for t in 0..frames {
        for (h, v) in half.iter_mut().zip(spec.row(t)) {
            *h = *v;
        }
        fft.inverse(&half, &mut seg);
        for i in 0..n_fft {
            y[t * hop + i] += w[i] * seg[i];
            wsum[t * hop + i] += w[i] * w[i];
        }
    }
    for (v, s) in y.iter_mut().zip(&wsum) {
        if *s > 0.0 {
            *v /= s;
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn cfg() -> MelConfig {
        MelConfig::default()
    }

    #[test]
    fn parseval_per_frame() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let b = AudioBuffer::new(
            44_100,
            (0..5000).map(|_| rng.random_range(-1.0f32..1.0)).collect(),
        )
        .unwrap();
        let c = cfg();
        let s = stft(&b, &c).unwrap();
        let w = c.window.coefficients(c.n_fft);
        for t in 0..s.n_frames() {
            // rebuild the full-spectrum energy from the half spectrum
            let row = s.coefficients.row(t);
            let mut e = row[0].norm_sqr() + row[c.n_fft / 2].norm_sqr();
            for k in 1..c.n_fft / 2 {
                e += 2.0 * row[k].norm_sqr();
            }
            e /= c.n_fft as f64;
            let time: f64 = (0..c.n_fft)
                .map(|i| (w[i] * f64::from(b.samples()[t * c.hop + i])).powi(2))
                .sum();
            assert!((e - time).abs() <= 1e-6 * time, "frame {t}: {e} vs {time}");
        }
    }

    #[test]
    fn dc_bin_equals_window_sum() {
        let b = AudioBuffer::new(44_100, vec![1.0; 3000]).unwrap();
        let c = cfg();
        let s = stft(&b, &c).unwrap();
        let wsum: f64 = c.window.coefficients(c.n_fft).iter().sum();
        for t in 0..s.n_frames() {
            assert!((s.coefficients[[t, 0]].norm() - wsum).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_buffer_gives_zero_spectrum() {
        let s = stft(&AudioBuffer::silence(44_100, 4096), &cfg()).unwrap();
        assert!(s.coefficients.iter().all(|c| c.norm() == 0.0));
        assert_eq!(s.n_bins(), 513);
    }

    #[test]
    fn bin_centred_sine_is_concentrated() {
        let c = cfg();
        let k0 = 40usize;
        let f = k0 as f64 * 44_100.0 / c.n_fft as f64;
        let b = AudioBuffer::sine(44_100, 8192, f, 0.5);
        let m = stft(&b, &c).unwrap().magnitudes();
        for t in 0..m.nrows() {
            let row = m.row(t);
            let peak = row[k0];
            assert!(row.iter().all(|&v| v <= peak));
            // Hann: the adjacent bins carry exactly half the peak; beyond the main lobe
            // the leakage sits more than 31 dB down
            for (k, &v) in row.iter().enumerate() {
                if k.abs_diff(k0) >= 2 {
                    assert!(20.0 * (v / peak).log10() < -31.0, "bin {k}");
                }
            }
        }
    }

    #[test]
    fn too_short() {
        assert!(matches!(
            stft(&AudioBuffer::silence(44_100, 1000), &cfg()),
            Err(SpectralError::TooShort { .. })
        ));
    }

    #[test]
    fn synthesis_inverts_analysis() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let x: Vec<f64> = (0..1024 + 256 * 9).map(|_| rng.random_range(-1.0..1.0)).collect();
        let spec = analyze(&x, 1024, 256, Window::Hann);
        let y = synthesize(&spec, 1024, 256, Window::Hann);
        assert_eq!(y.len(), x.len());
        // the first sample has zero window weight in every frame
        for i in 1..x.len() - 1 {
            assert!((x[i] - y[i]).abs() < 1e-9, "{i}");
        }
    }
}
