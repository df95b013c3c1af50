//! Eight Gaussian modes on a circle in 2-D, each selected by a one-token instruction.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use super::train::Example;
use super::{FlowError, LatentSeq};
use crate::conditioning::{ConditioningBundle, FrameFeatures, MmProvider, SourceFlags, ToyTokenProvider};
use crate::rng::item_rng;

pub const MODES: usize = 8;
pub const RADIUS: f64 = 4.0;
pub const SIGMA: f64 = 0.1;
pub const TOKEN_DIM: usize = 16;

const BATCH_STREAM: u64 = 0x7479;

pub fn mode_center(k: usize) -> [f64; 2] {
    let a = 2.0 * std::f64::consts::PI * k as f64 / MODES as f64;
    [RADIUS * a.cos(), RADIUS * a.sin()]
}

pub fn class_label(k: usize) -> String {
    format!("mode{k}")
}

/// `n` points from mode `k`.
pub fn draw_points<R: Rng + ?Sized>(k: usize, n: usize, rng: &mut R) -> Vec<[f64; 2]> {
    let c = mode_center(k);
    let noise = Normal::new(0.0, SIGMA).expect("positive sigma");
    (0..n)
        .map(|_| [c[0] + noise.sample(rng), c[1] + noise.sample(rng)])
        .collect()
}

pub fn point_latent(p: [f64; 2]) -> LatentSeq {
    LatentSeq::new(Array2::from_shape_vec((1, 2), p.to_vec()).expect("1x2")).expect("finite point")
}

/// Dataset and conditioning for the toy task. The instruction is the class label, turned
/// into one context token by a frozen [`ToyTokenProvider`].
#[derive(Debug, Clone)]
pub struct EightGaussians {
    provider: ToyTokenProvider,
}

impl EightGaussians {
    pub fn new(token_seed: u64) -> Self {
        Self {
            provider: ToyTokenProvider::new(TOKEN_DIM, token_seed),
        }
    }

    /// Toy dims (4 blocks, width 64, 4 heads) over a single 2-channel frame with nothing
    /// frame-aligned to concatenate.
    pub fn model_config() -> ModelConfig {
        ModelConfig {
            latent_dim: 2,
            mm_dim: TOKEN_DIM,
            trans_dim: 16,
            sync_dim: 0,
            mel_dim: 0,
            encoder_blocks: 1,
            ..ModelConfig::default()
        }
    }

    pub fn bundle(&self, k: usize) -> Result<ConditioningBundle, FlowError> {
        Ok(ConditioningBundle {
            mm: self.provider.provide(&class_label(k))?,
            transcript: String::new(),
            low: FrameFeatures::null(1, 0),
            flags: SourceFlags {
                mm: true,
                ..SourceFlags::NONE
            },
        })
    }

    /// A batch with classes drawn uniformly.
    pub fn batch<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Result<Vec<Example>, FlowError> {
        (0..size)
            .map(|_| {
                let k = rng.random_range(0..MODES);
                let p = draw_points(k, 1, rng)[0];
                Ok(Example {
                    x0: point_latent(p),
                    bundle: self.bundle(k)?,
                })
            })
            .collect()
    }

    /// Endless batches; batch `i` depends only on `(seed, i)`.
    pub fn batches(&self, size: usize, seed: u64) -> impl Iterator<Item = Result<Vec<Example>, FlowError>> + '_ {
        (0u64..).map(move |i| self.batch(size, &mut item_rng(seed, BATCH_STREAM, i)))
    }
}
