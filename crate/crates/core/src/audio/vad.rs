use super::{mean_square, AudioBuffer, AudioError};

pub const DEFAULT_VAD_FRAME_MS: f64 = 30.0;
pub const DEFAULT_VAD_THRESHOLD_DB: f64 = -40.0;

/// Fraction of non-overlapping frames whose RMS level (dBFS) is at or above `threshold_db`.
///
/// A trailing partial frame is ignored unless the buffer is shorter than one frame, in
/// which case the whole buffer counts as a single frame. An empty buffer has ratio 0.
pub fn vad_activity_ratio(
    buffer: &AudioBuffer,
    frame_ms: f64,
    threshold_db: f64,
) -> Result<f64, AudioError> {
    if !(frame_ms > 0.0) || !threshold_db.is_finite() {
        return Err(AudioError::InvalidParameter(format!(
            "vad frame {frame_ms} ms / threshold {threshold_db} dB"
        )));
    }
    if buffer.is_empty() {
        return Ok(0.0);
    }
    let frame = ((frame_ms * f64::from(buffer.sample_rate()) / 1000.0).round() as usize).max(1);
    let x = buffer.samples();
    let frames: Vec<&[f32]> = if x.len() < frame {
        vec![x]
    } else {
        x.chunks_exact(frame).collect()
    };
    let active = frames
        .iter()
        .filter(|f| 10.0 * mean_square(f).log10() >= threshold_db)
        .count();
    Ok(active as f64 / frames.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silence_and_tone() {
        let s = AudioBuffer::silence(44_100, 44_100);
        assert_eq!(vad_activity_ratio(&s, 30.0, -40.0).unwrap(), 0.0);
        // -20 dBFS RMS sine is active everywhere
        let t = AudioBuffer::sine(44_100, 44_100, 440.0, 0.1 * 2f64.sqrt());
        assert_eq!(vad_activity_ratio(&t, 30.0, -40.0).unwrap(), 1.0);
    }

    #[test]
    fn half_active() {
        let mut x = AudioBuffer::sine(16_000, 16_000, 300.0, 0.5).into_samples();
        for v in &mut x[8000..] {
            *v = 0.0;
        }
        let b = AudioBuffer::new(16_000, x).unwrap();
        // 10 ms frames of 160 samples: exactly 50 active of 100
        assert_eq!(vad_activity_ratio(&b, 10.0, -40.0).unwrap(), 0.5);
    }

    #[test]
    fn edge_cases() {
        let e = AudioBuffer::silence(44_100, 0);
        assert_eq!(vad_activity_ratio(&e, 30.0, -40.0).unwrap(), 0.0);
        let short = AudioBuffer::new(44_100, vec![0.5; 10]).unwrap();
        assert_eq!(vad_activity_ratio(&short, 30.0, -40.0).unwrap(), 1.0);
        assert!(vad_activity_ratio(&short, 0.0, -40.0).is_err());
    }
}
