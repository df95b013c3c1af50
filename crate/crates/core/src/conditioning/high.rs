use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ConditioningBundle, TranscriptEncoder};
use crate::diffsub::nn::Linear;
use crate::diffsub::{concat, DiffError, ParamStore, Tensor, Var};

/// Trainable side of the context stream: per-source adapters into the shared context width
/// and the transcript encoder. The multimodal features themselves are never trained.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HighStream {
    pub mm_adapter: Linear,
    pub trans_adapter: Linear,
    pub encoder: TranscriptEncoder,
    pub context_dim: usize,
}

impl HighStream {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        mm_dim: usize,
        trans_dim: usize,
        context_dim: usize,
        encoder_blocks: usize,
        rng: &mut R,
    ) -> Result<Self, DiffError> {
        Ok(Self {
            mm_adapter: Linear::new(store, "cond.mm_adapter", mm_dim, context_dim, rng)?,
            trans_adapter: Linear::new(store, "cond.trans_adapter", trans_dim, context_dim, rng)?,
            encoder: TranscriptEncoder::new(store, "cond.transcript", trans_dim, encoder_blocks, rng)?,
            context_dim,
        })
    }

    /// `[adapter(mm) ; adapter(encoder(transcript))]` as `[L, context_dim]` with its
    /// validity mask, or `None` when both sources are empty.
    pub fn forward<'t>(
        &self,
        p: &[Var<'t>],
        bundle: &ConditioningBundle,
    ) -> Result<Option<(Var<'t>, Vec<bool>)>, DiffError> {
        let tape = p
            .first()
            .map(|v| v.tape())
            .ok_or(DiffError::Empty("high stream parameters"))?;
        let mut parts = Vec::with_capacity(2);
        let mut valid = Vec::with_capacity(bundle.context_len());
        if !bundle.mm.is_empty() {
            let (l, d) = bundle.mm.tokens().dim();
            let raw = tape.constant(Tensor::new(
                vec![l, d],
                bundle.mm.tokens().iter().copied().collect(),
            )?);
            parts.push(self.mm_adapter.forward(p, raw)?);
            valid.extend_from_slice(bundle.mm.valid());
        }
        if let Some(enc) = self.encoder.forward(p, &bundle.transcript)? {
            let n = enc.shape()[0];
            parts.push(self.trans_adapter.forward(p, enc)?);
            valid.extend(std::iter::repeat_n(true, n));
        }
        match parts.len() {
            0 => Ok(None),
            1 => Ok(Some((parts[0], valid))),
            _ => Ok(Some((concat(&parts, 0)?, valid))),
        }
    }
}
