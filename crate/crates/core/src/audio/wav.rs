use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use serde::{Deserialize, Serialize};

use super::{resample, AudioBuffer, AudioError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WavFormat {
    Pcm16,
    Float32,
}

fn classify(path: &Path, err: hound::Error) -> AudioError {
    let path = path.to_path_buf();
    match err {
        // hound reports a short read as either UnexpectedEof or a generic "not enough bytes"
        hound::Error::IoError(e)
            if e.kind() == std::io::ErrorKind::UnexpectedEof
                || e.to_string().contains("enough bytes") =>
        {
            AudioError::Truncated {
                path,
                detail: e.to_string(),
            }
        }
        hound::Error::IoError(e) if e.kind() == std::io::ErrorKind::NotFound => {
            AudioError::Missing(path)
        }
        hound::Error::UnfinishedSample => AudioError::Truncated {
            path,
            detail: "data chunk ends mid-sample".into(),
        },
        hound::Error::Unsupported | hound::Error::TooWide | hound::Error::InvalidSampleFormat => {
            AudioError::UnsupportedCodec {
                path,
                detail: err.to_string(),
            }
        }
        other => AudioError::Malformed {
            path,
            detail: other.to_string(),
        },
    }
}

/// Reads a PCM16 or IEEE float32 RIFF/WAVE file, downmixing to mono by channel mean.
/// PCM16 samples map to `i / 32768`.
pub fn read_wav(path: &Path) -> Result<AudioBuffer, AudioError> {
    if !path.exists() {
        return Err(AudioError::Missing(path.to_path_buf()));
    }
    let reader = WavReader::open(path).map_err(|e| classify(path, e))?;
    let spec = reader.spec();
    let channels = usize::from(spec.channels.max(1));
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(|e| classify(path, e))?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(|e| classify(path, e))?,
        (fmt, bits) => {
            return Err(AudioError::UnsupportedCodec {
                path: path.to_path_buf(),
                detail: format!("{fmt:?} with {bits} bits per sample (expected PCM16 or float32)"),
            })
        }
    };
    if interleaved.len() % channels != 0 {
        return Err(AudioError::Truncated {
            path: path.to_path_buf(),
            detail: "data ends mid-frame".into(),
        });
    }
    let samples = if channels == 1 {
        interleaved.into_iter().map(|v| v as f32).collect()
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| (frame.iter().sum::<f64>() / channels as f64) as f32)
            .collect()
    };
    AudioBuffer::new(spec.sample_rate, samples)
}

/// [`read_wav`] followed by resampling to `sample_rate`.
pub fn read_wav_at(path: &Path, sample_rate: u32) -> Result<AudioBuffer, AudioError> {
    let buf = read_wav(path)?;
    Ok(resample(&buf, sample_rate))
}

/// Writes a mono WAV file. Samples outside `[-1, 1]` are clipped; the number of clipped
/// samples is logged and returned.
pub fn write_wav(
    buffer: &AudioBuffer,
    path: &Path,
    format: WavFormat,
) -> Result<usize, AudioError> {
    let unwritable = |e: hound::Error| AudioError::Unwritable {
        path: path.to_path_buf(),
        detail: e.to_string(),
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: buffer.sample_rate(),
        bits_per_sample: match format {
            WavFormat::Pcm16 => 16,
            WavFormat::Float32 => 32,
        },
        sample_format: match format {
            WavFormat::Pcm16 => SampleFormat::Int,
            WavFormat::Float32 => SampleFormat::Float,
        },
    };
    let mut writer = WavWriter::create(path, spec).map_err(unwritable)?;
    let mut clipped = 0usize;
    for &s in buffer.samples() {
        let c = if s.abs() > 1.0 {
            clipped += 1;
            s.clamp(-1.0, 1.0)
        } else {
            s
        };
        match format {
            WavFormat::Pcm16 => {
                let q = (f64::from(c) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                writer.write_sample(q).map_err(unwritable)?;
            }
            WavFormat::Float32 => writer.write_sample(c).map_err(unwritable)?,
        }
    }
    writer.finalize().map_err(unwritable)?;
    if clipped > 0 {
        log::warn!(
            "{}: clipped {clipped} samples outside [-1, 1]",
            path.display()
        );
    }
    Ok(clipped)
}
