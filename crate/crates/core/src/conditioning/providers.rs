use std::collections::HashMap;
use std::path::Path;

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};

use super::{ConditioningError, FeatureSeq, FrameFeatures};
use crate::rng::{fnv1a, named_rng};

pub const FEATSEQ_MAGIC: &[u8; 8] = b"FEATSEQ1";
/// Native frame rate of replayed sync features.
pub const SYNC_NATIVE_FPS: f64 = 25.0;

/// Source of the multimodal context features for an instruction.
pub trait MmProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn provide(&self, instruction: &str) -> Result<FeatureSeq, ConditioningError>;
}

/// Source of frame-aligned sync features.
pub trait SyncProvider: Send + Sync {
    fn dim(&self) -> usize;
    /// Features for a clip of `latent_frames` frames at `latent_rate` frames per second.
    fn provide(&self, latent_frames: usize, latent_rate: f64) -> Result<FrameFeatures, ConditioningError>;
}

/// Whitespace tokens mapped through a frozen pseudo-random table: each distinct token gets
/// a fixed standard-normal vector derived from `(seed, token)`.
#[derive(Debug, Clone)]
pub struct ToyTokenProvider {
    dim: usize,
    seed: u64,
}

impl ToyTokenProvider {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, seed }
    }

    pub fn token_vector(&self, token: &str) -> Vec<f64> {
        let mut rng = named_rng(self.seed ^ fnv1a(token.as_bytes()), "toy-token");
        (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect()
    }
}

impl MmProvider for ToyTokenProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn provide(&self, instruction: &str) -> Result<FeatureSeq, ConditioningError> {
        let tokens: Vec<&str> = instruction.split_whitespace().collect();
        let mut m = Array2::zeros((tokens.len(), self.dim));
        for (i, tok) in tokens.iter().enumerate() {
            for (j, v) in self.token_vector(tok).into_iter().enumerate() {
                m[[i, j]] = v;
            }
        }
        FeatureSeq::from_tokens(m)
    }
}

/// Always returns an empty context.
#[derive(Debug, Clone)]
pub struct NullMmProvider {
    pub dim: usize,
}

impl MmProvider for NullMmProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn provide(&self, _instruction: &str) -> Result<FeatureSeq, ConditioningError> {
        Ok(FeatureSeq::empty(self.dim))
    }
}

/// Precomputed features keyed by instruction text.
#[derive(Debug, Clone, Default)]
pub struct ReplayMmProvider {
    dim: usize,
    table: HashMap<String, FeatureSeq>,
}

impl ReplayMmProvider {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            table: HashMap::new(),
        }
    }

    pub fn insert(&mut self, instruction: &str, features: FeatureSeq) -> Result<(), ConditioningError> {
        if features.dim() != self.dim {
            return Err(ConditioningError::Width {
                expected: self.dim,
                got: features.dim(),
            });
        }
        self.table.insert(instruction.to_string(), features);
        Ok(())
    }

    /// Registers the features stored at `path` for `instruction`.
    pub fn load(&mut self, instruction: &str, path: &Path) -> Result<(), ConditioningError> {
        let f = read_featseq(path)?;
        self.insert(instruction, f)
    }
}

impl MmProvider for ReplayMmProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn provide(&self, instruction: &str) -> Result<FeatureSeq, ConditioningError> {
        self.table
            .get(instruction)
            .cloned()
            .ok_or_else(|| ConditioningError::Replay(format!("no features for {instruction:?}")))
    }
}

/// Zero features with cleared validity.
#[derive(Debug, Clone)]
pub struct NullSyncProvider {
    pub dim: usize,
}

impl SyncProvider for NullSyncProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn provide(&self, latent_frames: usize, _latent_rate: f64) -> Result<FrameFeatures, ConditioningError> {
        Ok(FrameFeatures::null(latent_frames, self.dim))
    }
}

/// Replays features recorded at `native_fps`, mapped onto latent frames by nearest
/// preceding frame: latent frame `t` reads row `floor(t * native_fps / latent_rate)`.
#[derive(Debug, Clone)]
pub struct ReplaySyncProvider {
    features: Array2<f64>,
    native_fps: f64,
}

impl ReplaySyncProvider {
    pub fn new(features: Array2<f64>, native_fps: f64) -> Result<Self, ConditioningError> {
        if !(native_fps > 0.0) {
            return Err(ConditioningError::InvalidParameter(format!("fps {native_fps}")));
        }
        Ok(Self {
            features,
            native_fps,
        })
    }

    pub fn from_file(path: &Path, native_fps: f64) -> Result<Self, ConditioningError> {
        Self::new(read_featseq(path)?.tokens().clone(), native_fps)
    }
}

impl SyncProvider for ReplaySyncProvider {
    fn dim(&self) -> usize {
        self.features.ncols()
    }

    fn provide(&self, latent_frames: usize, latent_rate: f64) -> Result<FrameFeatures, ConditioningError> {
        if !(latent_rate > 0.0) {
            return Err(ConditioningError::InvalidParameter(format!("latent rate {latent_rate}")));
        }
        let rows = self.features.nrows();
        let expected = latent_frames as f64 * self.native_fps / latent_rate;
        if (rows as f64 - expected).abs() > 1.0 {
            return Err(ConditioningError::Replay(format!(
                "{rows} sync rows for a clip needing {expected:.2}"
            )));
        }
        let mut out = Array2::zeros((latent_frames, self.dim()));
        for t in 0..latent_frames {
            let src = ((t as f64 * self.native_fps / latent_rate).floor() as usize).min(rows - 1);
            out.row_mut(t).assign(&self.features.row(src));
        }
        FrameFeatures::from_frames(out)
    }
}

/// `FEATSEQ1`, u32 rows, u32 dim, little-endian f32 row-major.
pub fn write_featseq(features: &FeatureSeq, path: &Path) -> Result<(), ConditioningError> {
    let (l, d) = features.tokens().dim();
    let mut out = Vec::with_capacity(16 + 4 * l * d);
    out.extend_from_slice(FEATSEQ_MAGIC);
    out.extend_from_slice(&(l as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    for v in features.tokens().iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_featseq(path: &Path) -> Result<FeatureSeq, ConditioningError> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 16 || &bytes[..8] != FEATSEQ_MAGIC {
        return Err(ConditioningError::Replay(format!("{}: missing FEATSEQ1 header", path.display())));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (l, d) = (word(8), word(12));
    if bytes.len() - 16 != 4 * l * d {
        return Err(ConditioningError::Replay(format!(
            "{}: header says {l}x{d} but holds {} bytes of data",
            path.display(),
            bytes.len() - 16
        )));
    }
    let data: Vec<f64> = bytes[16..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    FeatureSeq::from_tokens(Array2::from_shape_vec((l, d), data).expect("length checked"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_provider_token_count_and_stability() {
        let p = ToyTokenProvider::new(16, 5);
        let f = p.provide("dog bark").unwrap();
        assert_eq!((f.len(), f.dim()), (2, 16));
        assert_eq!(f, p.provide("  dog   bark ").unwrap());
        assert_ne!(f.tokens().row(0), f.tokens().row(1));
        assert_eq!(f.tokens().row(0), p.provide("dog").unwrap().tokens().row(0));
    }

    #[test]
    fn null_providers() {
        assert_eq!(NullMmProvider { dim: 4 }.provide("x y").unwrap().len(), 0);
        let s = NullSyncProvider { dim: 8 }.provide(80, 172.0).unwrap();
        assert_eq!(s.n_frames(), 80);
        assert!(s.frames().iter().all(|&v| v == 0.0));
        assert!(s.valid().iter().all(|v| !v));
    }

    #[test]
    fn featseq_roundtrip_and_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.feat");
        let m = Array2::from_shape_fn((3, 5), |(i, j)| f64::from((i * 5 + j) as f32 * 0.37f32));
        let f = FeatureSeq::from_tokens(m).unwrap();
        write_featseq(&f, &path).unwrap();
        assert_eq!(read_featseq(&path).unwrap(), f);

        let mut r = ReplayMmProvider::new(5);
        r.load("play it", &path).unwrap();
        assert_eq!(r.provide("play it").unwrap(), f);
        assert!(r.provide("other").is_err());
        let mut narrow = ReplayMmProvider::new(4);
        assert!(matches!(narrow.load("x", &path), Err(ConditioningError::Width { .. })));
    }

    #[test]
    fn sync_replay_nearest_frame() {
        let rate = 44_100.0 / 256.0;
        let feats = Array2::from_shape_fn((50, 2), |(i, j)| (i * 2 + j) as f64);
        let p = ReplaySyncProvider::new(feats.clone(), SYNC_NATIVE_FPS).unwrap();
        let out = p.provide(344, rate).unwrap();
        assert_eq!(out.n_frames(), 344);
        for t in 0..344 {
            let src = (t as f64 * 25.0 / rate).floor() as usize;
            assert_eq!(out.frames().row(t), feats.row(src));
        }
        assert_eq!(out, p.provide(344, rate).unwrap());
        assert!(p.provide(600, rate).is_err());
    }
}
