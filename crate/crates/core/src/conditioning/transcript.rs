use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ConditioningError, FeatureSeq};
use crate::diffsub::nn::{LayerNorm, Linear};
use crate::diffsub::{DiffError, ParamId, ParamStore, Tape, Var};

pub const TRANSCRIPT_KERNEL: usize = 7;

/// Character vocabulary: pad, unknown, then printable ASCII `0x20..=0x7E`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CharVocab;

impl CharVocab {
    pub const PAD: usize = 0;
    pub const UNK: usize = 1;
    pub const SIZE: usize = 2 + 95;

    pub fn id(c: char) -> Option<usize> {
        let u = c as u32;
        (0x20..=0x7E).contains(&u).then(|| 2 + (u - 0x20) as usize)
    }

    /// Ids for `text` and the number of characters mapped to [`CharVocab::UNK`].
    pub fn encode(text: &str) -> (Vec<usize>, usize) {
        let mut unknown = 0;
        let ids = text
            .chars()
            .map(|c| {
                Self::id(c).unwrap_or_else(|| {
                    unknown += 1;
                    Self::UNK
                })
            })
            .collect();
        (ids, unknown)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ConvBlock {
    dw_weight: ParamId,
    dw_bias: ParamId,
    norm: LayerNorm,
    expand: Linear,
    project: Linear,
}

/// Character embeddings refined by residual depthwise-conv blocks
/// (dwconv k7 → layernorm → linear 4× → gelu → linear, plus the input).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptEncoder {
    embed: ParamId,
    blocks: Vec<ConvBlock>,
    dim: usize,
}

impl TranscriptEncoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        dim: usize,
        n_blocks: usize,
        rng: &mut R,
    ) -> Result<Self, DiffError> {
        let embed = store.insert_normal(&format!("{prefix}.embed"), &[CharVocab::SIZE, dim], 1.0, rng)?;
        let mut blocks = Vec::with_capacity(n_blocks);
        for i in 0..n_blocks {
            let name = format!("{prefix}.block{i}");
            blocks.push(ConvBlock {
                dw_weight: store.insert_normal(
                    &format!("{name}.dw.weight"),
                    &[TRANSCRIPT_KERNEL, dim],
                    1.0 / (TRANSCRIPT_KERNEL as f64).sqrt(),
                    rng,
                )?,
                dw_bias: store.insert_normal(&format!("{name}.dw.bias"), &[dim], 0.02, rng)?,
                norm: LayerNorm::new(store, &format!("{name}.norm"), dim, rng)?,
                expand: Linear::new(store, &format!("{name}.expand"), dim, 4 * dim, rng)?,
                project: Linear::new(store, &format!("{name}.project"), 4 * dim, dim, rng)?,
            });
        }
        Ok(Self { embed, blocks, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// `[chars, dim]`, or `None` for an empty transcript.
    pub fn forward<'t>(&self, p: &[Var<'t>], text: &str) -> Result<Option<Var<'t>>, DiffError> {
        let (ids, unknown) = CharVocab::encode(text);
        if unknown > 0 {
            log::debug!("transcript: {unknown} characters mapped to <unk>");
        }
        if ids.is_empty() {
            return Ok(None);
        }
        let mut x = p[self.embed.0].embedding(&ids)?;
        for b in &self.blocks {
            let h = x.depthwise_conv1d(p[b.dw_weight.0], p[b.dw_bias.0])?;
            let h = b.norm.forward(p, h)?;
            let h = b.expand.forward(p, h)?.gelu()?;
            let h = b.project.forward(p, h)?;
            x = x.add(h)?;
        }
        Ok(Some(x))
    }

    /// Evaluates the encoder outside of training.
    pub fn encode(&self, store: &ParamStore, text: &str) -> Result<FeatureSeq, ConditioningError> {
        let tape = Tape::new();
        let p = store.bind(&tape);
        match self.forward(&p, text)? {
            None => Ok(FeatureSeq::empty(self.dim)),
            Some(v) => {
                let t = v.value();
                let rows = t.shape()[0];
                let arr = ndarray::Array2::from_shape_vec((rows, self.dim), t.into_data())
                    .expect("encoder output is [chars, dim]");
                FeatureSeq::from_tokens(arr)
            }
        }
    }
}
