use std::path::Path;

use ndarray::Array2;

use super::{MelConfig, MelSpectrogram, SpectralError};

pub const MEL_DUMP_MAGIC: &[u8; 8] = b"MELSPEC1";

/// `MELSPEC1`, u32 frames, u32 mels, then little-endian f32 row-major values.
pub fn encode_mel_dump(mel: &MelSpectrogram) -> Vec<u8> {
    let (t, m) = mel.frames().dim();
    let mut out = Vec::with_capacity(16 + 4 * t * m);
    out.extend_from_slice(MEL_DUMP_MAGIC);
    out.extend_from_slice(&(t as u32).to_le_bytes());
    out.extend_from_slice(&(m as u32).to_le_bytes());
    for v in mel.frames().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses a dump; the config supplies everything the header does not carry.
pub fn decode_mel_dump(bytes: &[u8], cfg: &MelConfig) -> Result<MelSpectrogram, SpectralError> {
    if bytes.len() < 16 || &bytes[..8] != MEL_DUMP_MAGIC {
        return Err(SpectralError::Dump("missing MELSPEC1 header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (t, m) = (word(8), word(12));
    if m != cfg.n_mels {
        return Err(SpectralError::Dump(format!("dump has {m} mels, config expects {}", cfg.n_mels)));
    }
    let body = &bytes[16..];
    if body.len() != 4 * t * m {
        return Err(SpectralError::Dump(format!(
            "expected {} data bytes for {t}x{m}, found {}",
            4 * t * m,
            body.len()
        )));
    }
    let data: Vec<f32> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let frames = Array2::from_shape_vec((t, m), data).expect("length checked");
    MelSpectrogram::new(*cfg, frames)
}

pub fn write_mel_dump(mel: &MelSpectrogram, path: &Path) -> Result<(), SpectralError> {
    std::fs::write(path, encode_mel_dump(mel))?;
    Ok(())
}

pub fn read_mel_dump(path: &Path, cfg: &MelConfig) -> Result<MelSpectrogram, SpectralError> {
    decode_mel_dump(&std::fs::read(path)?, cfg)
}
