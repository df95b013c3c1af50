//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"RFADCKPT"  u32 version=1  u64 step  u32 n_params
//! n_params x { u32 name_len, name (utf-8), u32 ndim, u32 dims[ndim],
//!              f32 value[numel], f32 first_moment[numel], f32 second_moment[numel] }
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::params::{ParamStore, Parameter};
use super::DiffError;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RFADCKPT";
const VERSION: u32 = 1;

pub fn encode_checkpoint(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + store.numel() * 12);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&store.step.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for p in store.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.shape.len() as u32).to_le_bytes());
        for &d in &p.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for buf in [&p.value, &p.first_moment, &p.second_moment] {
            for v in buf.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DiffError> {
        if self.pos + n > self.buf.len() {
            return Err(DiffError::Checkpoint(format!(
                "truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, DiffError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64, DiffError> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, DiffError> {
        let bytes = self.take(n * 4)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ParamStore, DiffError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(DiffError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(DiffError::Checkpoint(format!(
            "unsupported version {version}"
        )));
    }
    let step = r.u64()?;
    let n = r.u32()? as usize;
    let mut params = Vec::with_capacity(n);
    for _ in 0..n {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| DiffError::Checkpoint("parameter name is not utf-8".into()))?
            .to_string();
        let ndim = r.u32()? as usize;
        let shape = (0..ndim)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let numel: usize = shape.iter().product();
        let value = r.f32s(numel)?;
        let first_moment = r.f32s(numel)?;
        let second_moment = r.f32s(numel)?;
        params.push(Parameter {
            name,
            shape,
            value,
            first_moment,
            second_moment,
        });
    }
    if r.pos != bytes.len() {
        return Err(DiffError::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    ParamStore::from_parts(params, step)
}

pub fn save_checkpoint(store: &ParamStore, path: &Path) -> Result<(), DiffError> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_checkpoint(store))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ParamStore, DiffError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn roundtrip_is_bit_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut s = ParamStore::new();
        s.insert_normal("block.0.w", &[3, 4], 0.7, &mut rng)
            .unwrap();
        s.insert_normal("bias", &[4], 0.1, &mut rng).unwrap();
        s.insert("scalar", &[], vec![f32::MIN_POSITIVE]).unwrap();
        s.get_mut(super::super::ParamId(1)).first_moment[2] = -0.0;
        s.get_mut(super::super::ParamId(1)).second_moment[3] = 1e-30;
        s.step = 12345;
        let bytes = encode_checkpoint(&s);
        assert_eq!(&bytes[..8], b"RFADCKPT");
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(encode_checkpoint(&back), bytes);
        assert_eq!(back, s);
    }

    #[test]
    fn truncation_is_detected() {
        let mut s = ParamStore::new();
        s.insert_constant("w", &[8], 1.0).unwrap();
        let bytes = encode_checkpoint(&s);
        assert!(matches!(
            decode_checkpoint(&bytes[..bytes.len() - 3]),
            Err(DiffError::Checkpoint(_))
        ));
        assert!(decode_checkpoint(b"NOTACKPT").is_err());
    }
}
