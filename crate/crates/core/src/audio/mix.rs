use super::{mean_square, AudioBuffer, AudioError};

/// Result of placing a foreground event into a background.
#[derive(Debug, Clone, PartialEq)]
pub struct Mix {
    /// `background + stem`, sample by sample.
    pub mixture: AudioBuffer,
    /// The gain-scaled foreground placed on the background timeline (zeros elsewhere).
    pub stem: AudioBuffer,
    pub background: AudioBuffer,
    pub gain: f64,
    /// First sample of the foreground inside the background timeline.
    pub onset: usize,
}

/// Scales `foreground` so that its power over the overlap window sits `snr_db` above the
/// background's power over the same window, then adds it at `onset_s`.
///
/// A silent foreground is placed with unit gain (its stem is all zeros).
pub fn mix_at_snr(
    foreground: &AudioBuffer,
    background: &AudioBuffer,
    snr_db: f64,
    onset_s: f64,
) -> Result<Mix, AudioError> {
    if foreground.sample_rate() != background.sample_rate() {
        return Err(AudioError::SampleRateMismatch(
            foreground.sample_rate(),
            background.sample_rate(),
        ));
    }
    if !(onset_s >= 0.0) || !snr_db.is_finite() {
        return Err(AudioError::InvalidParameter(format!(
            "onset {onset_s} s / snr {snr_db} dB"
        )));
    }
    let onset = (onset_s * f64::from(background.sample_rate())).round() as usize;
    let n = foreground.len();
    if onset + n > background.len() {
        return Err(AudioError::Overrun {
            onset,
            fg_len: n,
            bg_len: background.len(),
        });
    }
    let p_bg = mean_square(&background.samples()[onset..onset + n]);
    if n > 0 && p_bg <= 0.0 {
        return Err(AudioError::SilentBackground);
    }
    let p_fg = foreground.mean_square();
    let gain = if p_fg > 0.0 {
        (p_bg / p_fg * 10f64.powf(snr_db / 10.0)).sqrt()
    } else {
        1.0
    };

    let mut stem = vec![0.0f32; background.len()];
    for (dst, &s) in stem[onset..onset + n].iter_mut().zip(foreground.samples()) {
        *dst = (f64::from(s) * gain) as f32;
    }
    let mixture: Vec<f32> = background
        .samples()
        .iter()
        .zip(&stem)
        .map(|(b, s)| b + s)
        .collect();
    let sr = background.sample_rate();
    Ok(Mix {
        mixture: AudioBuffer::new(sr, mixture)?,
        stem: AudioBuffer::new(sr, stem)?,
        background: background.clone(),
        gain,
        onset,
    })
}

/// `10 log10(P_stem / P_background)` over `range` (mean-square powers).
pub fn measure_snr_db(stem: &[f32], background: &[f32], range: std::ops::Range<usize>) -> f64 {
    10.0 * (mean_square(&stem[range.clone()]) / mean_square(&background[range])).log10()
}
