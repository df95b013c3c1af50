//! Small FFT/window helpers shared by the vocoder and the spectral front-end.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

pub(crate) type C64 = Complex<f64>;

/// Periodic Hann window of length `n`.
pub(crate) fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Forward/inverse real FFT of a fixed size, returning the `n/2 + 1` non-negative bins.
pub(crate) struct RealFft {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<C64>,
}

impl RealFft {
    pub(crate) fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            scratch: vec![C64::new(0.0, 0.0); n],
        }
    }

    pub(crate) fn bins(&self) -> usize {
        self.n / 2 + 1
    }

    /// Unnormalized DFT of `frame` (length `n`), written into `out` (length `n/2 + 1`).
    pub(crate) fn forward(&mut self, frame: &[f64], out: &mut [C64]) {
        for (s, &x) in self.scratch.iter_mut().zip(frame) {
            *s = C64::new(x, 0.0);
        }
        self.forward.process(&mut self.scratch);
        out.copy_from_slice(&self.scratch[..self.bins()]);
    }

    /// Inverse of [`RealFft::forward`] (includes the `1/n` factor), assuming Hermitian symmetry.
    pub(crate) fn inverse(&mut self, half: &[C64], out: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            self.scratch[k] = if k < half.len() {
                half[k]
            } else {
                half[n - k].conj()
            };
        }
        // DC and Nyquist must be real for a real signal.
        self.scratch[0].im = 0.0;
        if n % 2 == 0 {
            self.scratch[n / 2].im = 0.0;
        }
        self.inverse.process(&mut self.scratch);
        let scale = 1.0 / n as f64;
        for (o, s) in out.iter_mut().zip(&self.scratch) {
            *o = s.re * scale;
        }
    }
}

/// Wraps a phase to `[-pi, pi]`.
pub(crate) fn wrap_phase(p: f64) -> f64 {
    p - 2.0 * PI * (p / (2.0 * PI)).round()
}
