use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::embed::TimeEmbedding;
use super::{FlowError, LatentSeq};
use crate::conditioning::{ConditioningBundle, HighStream};
use crate::diffsub::nn::{LayerNorm, Linear};
use crate::diffsub::{concat, scaled_dot_product_attention, ParamStore, Tape, Tensor, Var};

const MASKED: f64 = -1e9;
/// Items per tape in [`Dit::predict`].
pub const PREDICT_CHUNK: usize = 256;

/// Predicts velocities for a batch of latents sharing one frame count.
pub trait VelocityModel {
    fn latent_dim(&self) -> usize;

    fn velocity(
        &self,
        x: &[LatentSeq],
        t: &[f64],
        bundles: &[&ConditioningBundle],
    ) -> Result<Vec<LatentSeq>, FlowError>;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Block {
    norm_self: LayerNorm,
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    norm_cross: LayerNorm,
    cq: Linear,
    ck: Linear,
    cv: Linear,
    co: Linear,
    norm_mlp: LayerNorm,
    fc1: Linear,
    fc2: Linear,
}

/// Cross-attention context for a batch: `[B, L, C]` keys source, additive key mask
/// `[B, 1, 1, L]`, and a per-item gate `[B, 1, 1]` that zeroes the branch for items without
/// any valid token.
struct Context<'t> {
    tokens: Var<'t>,
    mask: Var<'t>,
    gate: Option<Var<'t>>,
}

/// Diffusion transformer over latent frames. Holds parameter ids into a [`ParamStore`].
/// Key projections carry no bias.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dit {
    pub config: ModelConfig,
    high: HighStream,
    sync_token: Option<Linear>,
    mel_token: Option<Linear>,
    time: TimeEmbedding,
    input: Linear,
    blocks: Vec<Block>,
    norm_out: LayerNorm,
    output: Linear,
}

impl Dit {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        config: ModelConfig,
        rng: &mut R,
    ) -> Result<Self, FlowError> {
        config.validate()?;
        let c = &config;
        let high = HighStream::new(store, c.mm_dim, c.trans_dim, c.context_dim, c.encoder_blocks, rng)?;
        let sync_token = if c.injection.sync_in_context() && c.sync_dim > 0 {
            Some(Linear::new(store, "cond.sync_token", c.sync_dim, c.context_dim, rng)?)
        } else {
            None
        };
        let mel_token = if c.injection.mel_in_context() && c.mel_dim > 0 {
            Some(Linear::new(store, "cond.mel_token", c.mel_dim, c.context_dim, rng)?)
        } else {
            None
        };
        let cat = c.concat_dim();
        let time = TimeEmbedding::new(store, "time", c.time_features, c.width, cat, rng)?;
        let input = Linear::new(store, "input", c.latent_dim + cat, c.width, rng)?;
        let w = c.width;
        let mut blocks = Vec::with_capacity(c.depth);
        for i in 0..c.depth {
            let n = |s: &str| format!("block{i}.{s}");
            blocks.push(Block {
                norm_self: LayerNorm::new(store, &n("norm_self"), w, rng)?,
                q: Linear::new(store, &n("self.q"), w, w, rng)?,
                k: Linear::without_bias(store, &n("self.k"), w, w, rng)?,
                v: Linear::new(store, &n("self.v"), w, w, rng)?,
                o: Linear::new(store, &n("self.o"), w, w, rng)?,
                norm_cross: LayerNorm::new(store, &n("norm_cross"), w, rng)?,
                cq: Linear::new(store, &n("cross.q"), w, w, rng)?,
                ck: Linear::without_bias(store, &n("cross.k"), c.context_dim, w, rng)?,
                cv: Linear::new(store, &n("cross.v"), c.context_dim, w, rng)?,
                co: Linear::new(store, &n("cross.o"), w, w, rng)?,
                norm_mlp: LayerNorm::new(store, &n("norm_mlp"), w, rng)?,
                fc1: Linear::new(store, &n("mlp.fc1"), w, c.mlp_ratio * w, rng)?,
                fc2: Linear::new(store, &n("mlp.fc2"), c.mlp_ratio * w, w, rng)?,
            });
        }
        // residual branches start as the identity
        for b in &blocks {
            for l in [b.o, b.co, b.fc2] {
                store.get_mut(l.weight).value.fill(0.0);
                if let Some(bias) = l.bias {
                    store.get_mut(bias).value.fill(0.0);
                }
            }
        }
        let norm_out = LayerNorm::new(store, "norm_out", w, rng)?;
        let output = Linear::new(store, "output", w, c.latent_dim, rng)?;
        Ok(Self {
            config,
            high,
            sync_token,
            mel_token,
            time,
            input,
            blocks,
            norm_out,
            output,
        })
    }

    fn check_inputs(&self, shape: &[usize], t: &[f64], bundles: &[&ConditioningBundle]) -> Result<(), FlowError> {
        let c = &self.config;
        let [b, frames, d] = shape else {
            return Err(FlowError::InvalidConfig(format!("latent batch must be [B, T, D], got {shape:?}")));
        };
        if *b == 0 {
            return Err(FlowError::EmptyBatch);
        }
        if *d != c.latent_dim {
            return Err(FlowError::Width {
                what: "latent",
                expected: c.latent_dim,
                got: *d,
            });
        }
        if t.len() != *b || bundles.len() != *b {
            return Err(FlowError::InvalidConfig(format!(
                "batch of {b} latents with {} times and {} bundles",
                t.len(),
                bundles.len()
            )));
        }
        if let Some(&bad) = t.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(FlowError::Time(bad));
        }
        for bundle in bundles {
            if bundle.n_frames() != *frames {
                return Err(FlowError::Frames {
                    expected: *frames,
                    got: bundle.n_frames(),
                });
            }
            if bundle.low.dim() != c.low_dim() {
                return Err(FlowError::Width {
                    what: "frame-aligned stream",
                    expected: c.low_dim(),
                    got: bundle.low.dim(),
                });
            }
            if bundle.mm.dim() != c.mm_dim {
                return Err(FlowError::Width {
                    what: "multimodal features",
                    expected: c.mm_dim,
                    got: bundle.mm.dim(),
                });
            }
        }
        Ok(())
    }

    /// Low-stream columns `[from, to)` of one bundle as a `[T, to - from]` constant.
    fn low_columns<'t>(tape: &'t Tape, bundle: &ConditioningBundle, from: usize, to: usize) -> Result<Var<'t>, FlowError> {
        let frames = bundle.low.frames();
        let data: Vec<f64> = frames
            .rows()
            .into_iter()
            .flat_map(|r| r.iter().skip(from).take(to - from).copied().collect::<Vec<_>>())
            .collect();
        Ok(tape.constant(Tensor::new(vec![frames.nrows(), to - from], data)?))
    }

    /// Per-item context tokens in the order multimodal, transcript, sync, mel.
    fn item_context<'t>(
        &self,
        p: &[Var<'t>],
        bundle: &ConditioningBundle,
    ) -> Result<Option<(Var<'t>, Vec<bool>)>, FlowError> {
        let tape = p[0].tape();
        let c = &self.config;
        let mut parts = Vec::new();
        let mut valid = Vec::new();
        if !bundle.mm.is_empty() {
            let (l, d) = bundle.mm.tokens().dim();
            let raw = tape.constant(Tensor::new(vec![l, d], bundle.mm.tokens().iter().copied().collect())?);
            parts.push(self.high.mm_adapter.forward(p, raw)?);
            valid.extend_from_slice(bundle.mm.valid());
        }
        if c.injection.transcript_in_context() {
            if let Some(enc) = self.high.encoder.forward(p, &bundle.transcript)? {
                let n = enc.shape()[0];
                parts.push(self.high.trans_adapter.forward(p, enc)?);
                valid.extend(std::iter::repeat_n(true, n));
            }
        }
        if let (Some(lin), true) = (&self.sync_token, bundle.flags.sync) {
            let raw = Self::low_columns(tape, bundle, 0, c.sync_dim)?;
            parts.push(lin.forward(p, raw)?);
            valid.extend_from_slice(bundle.low.valid());
        }
        if let (Some(lin), true) = (&self.mel_token, bundle.flags.mel) {
            let raw = Self::low_columns(tape, bundle, c.sync_dim, c.low_dim())?;
            parts.push(lin.forward(p, raw)?);
            valid.extend_from_slice(bundle.low.valid());
        }
        Ok(match parts.len() {
            0 => None,
            1 => Some((parts[0], valid)),
            _ => Some((concat(&parts, 0)?, valid)),
        })
    }

    fn batch_context<'t>(&self, p: &[Var<'t>], bundles: &[&ConditioningBundle]) -> Result<Option<Context<'t>>, FlowError> {
        let tape = p[0].tape();
        let cd = self.config.context_dim;
        let items = bundles
            .iter()
            .map(|b| self.item_context(p, b))
            .collect::<Result<Vec<_>, _>>()?;
        let l_max = items.iter().flatten().map(|(_, v)| v.len()).max().unwrap_or(0);
        if l_max == 0 {
            return Ok(None);
        }
        let b = bundles.len();
        let mut rows = Vec::with_capacity(b);
        let mut mask = vec![MASKED; b * l_max];
        let mut gate = vec![0.0; b];
        for (i, item) in items.into_iter().enumerate() {
            let (tokens, valid) = match item {
                Some(x) => x,
                None => (tape.constant(Tensor::zeros(&[0, cd])), Vec::new()),
            };
            for (j, &ok) in valid.iter().enumerate() {
                if ok {
                    mask[i * l_max + j] = 0.0;
                    gate[i] = 1.0;
                }
            }
            let padded = match l_max - valid.len() {
                0 => tokens,
                pad => concat(&[tokens, tape.constant(Tensor::zeros(&[pad, cd]))], 0)?,
            };
            rows.push(padded.reshape(&[1, l_max, cd])?);
        }
        let tokens = if rows.len() == 1 { rows[0] } else { concat(&rows, 0)? };
        let mask = tape.constant(Tensor::new(vec![b, 1, 1, l_max], mask)?);
        let gate = if gate.iter().all(|&g| g == 1.0) {
            None
        } else {
            Some(tape.constant(Tensor::new(vec![b, 1, 1], gate)?))
        };
        Ok(Some(Context { tokens, mask, gate }))
    }

    /// Frame-aligned block `[B, T, concat_dim]` before the time embedding is added.
    fn concat_block<'t>(&self, p: &[Var<'t>], bundles: &[&ConditioningBundle], frames: usize) -> Result<Var<'t>, FlowError> {
        let tape = p[0].tape();
        let c = &self.config;
        let b = bundles.len();
        if c.concat_source_dim() == 0 {
            return Ok(tape.constant(Tensor::zeros(&[b, frames, c.time_slot])));
        }
        let low_from = if c.injection.sync_in_context() { c.sync_dim } else { 0 };
        let low_to = if c.injection.mel_in_context() { c.sync_dim } else { c.low_dim() };
        let low_width = low_to - low_from;
        if c.injection.transcript_in_context() {
            let mut data = Vec::with_capacity(b * frames * low_width);
            for bundle in bundles {
                for row in bundle.low.frames().rows() {
                    data.extend(row.iter().skip(low_from).take(low_width));
                }
            }
            return Ok(tape.constant(Tensor::new(vec![b, frames, low_width], data)?));
        }
        let mut items = Vec::with_capacity(b);
        for bundle in bundles {
            let trans = self.frame_aligned_transcript(p, &bundle.transcript, frames)?;
            let item = if low_width == 0 {
                trans
            } else {
                concat(&[trans, Self::low_columns(tape, bundle, low_from, low_to)?], 1)?
            };
            items.push(item.reshape(&[1, frames, c.trans_dim + low_width])?);
        }
        Ok(if items.len() == 1 { items[0] } else { concat(&items, 0)? })
    }

    /// Encoded characters laid on frames: row `i` carries character `i`, surplus frames
    /// are zero and surplus characters are dropped.
    fn frame_aligned_transcript<'t>(&self, p: &[Var<'t>], text: &str, frames: usize) -> Result<Var<'t>, FlowError> {
        let tape = p[0].tape();
        let d = self.config.trans_dim;
        let Some(enc) = self.high.encoder.forward(p, text)? else {
            return Ok(tape.constant(Tensor::zeros(&[frames, d])));
        };
        let n = enc.shape()[0];
        Ok(if n >= frames {
            enc.narrow(0, 0, frames)?
        } else {
            concat(&[enc, tape.constant(Tensor::zeros(&[frames - n, d]))], 0)?
        })
    }

    fn split_heads<'t>(&self, x: Var<'t>, b: usize, n: usize) -> Result<Var<'t>, FlowError> {
        let h = self.config.heads;
        Ok(x.reshape(&[b, n, h, self.config.width / h])?.permute(&[0, 2, 1, 3])?)
    }

    fn merge_heads<'t>(&self, x: Var<'t>, b: usize, n: usize) -> Result<Var<'t>, FlowError> {
        Ok(x.permute(&[0, 2, 1, 3])?.reshape(&[b, n, self.config.width])?)
    }

    /// Velocity `[B, T, latent_dim]` for latents `x: [B, T, latent_dim]` at times `t`.
    pub fn forward<'t>(
        &self,
        p: &[Var<'t>],
        x: Var<'t>,
        t: &[f64],
        bundles: &[&ConditioningBundle],
    ) -> Result<Var<'t>, FlowError> {
        self.forward_impl(p, x, t, bundles, true)
    }

    /// The same network with every cross-attention branch removed.
    pub fn forward_without_context<'t>(
        &self,
        p: &[Var<'t>],
        x: Var<'t>,
        t: &[f64],
        bundles: &[&ConditioningBundle],
    ) -> Result<Var<'t>, FlowError> {
        self.forward_impl(p, x, t, bundles, false)
    }

    fn forward_impl<'t>(
        &self,
        p: &[Var<'t>],
        x: Var<'t>,
        t: &[f64],
        bundles: &[&ConditioningBundle],
        use_context: bool,
    ) -> Result<Var<'t>, FlowError> {
        let shape = x.shape();
        self.check_inputs(&shape, t, bundles)?;
        let (b, frames) = (shape[0], shape[1]);
        let cat_dim = self.config.concat_dim();

        let temb = self.time.forward(p, t)?.reshape(&[b, 1, cat_dim])?;
        let low = self.concat_block(p, bundles, frames)?.add(temb)?;
        let mut h = self.input.forward(p, concat(&[x, low], 2)?)?;

        let context = if use_context { self.batch_context(p, bundles)? } else { None };
        let ctx_kv = context.as_ref().map(|c| c.tokens.shape()[1]);

        for blk in &self.blocks {
            let a = blk.norm_self.forward(p, h)?;
            let q = self.split_heads(blk.q.forward(p, a)?, b, frames)?;
            let k = self.split_heads(blk.k.forward(p, a)?, b, frames)?;
            let v = self.split_heads(blk.v.forward(p, a)?, b, frames)?;
            let att = self.merge_heads(scaled_dot_product_attention(q, k, v, None)?, b, frames)?;
            h = h.add(blk.o.forward(p, att)?)?;

            if let (Some(ctx), Some(l)) = (&context, ctx_kv) {
                let a = blk.norm_cross.forward(p, h)?;
                let q = self.split_heads(blk.cq.forward(p, a)?, b, frames)?;
                let k = self.split_heads(blk.ck.forward(p, ctx.tokens)?, b, l)?;
                let v = self.split_heads(blk.cv.forward(p, ctx.tokens)?, b, l)?;
                let att = scaled_dot_product_attention(q, k, v, Some(ctx.mask))?;
                let mut out = blk.co.forward(p, self.merge_heads(att, b, frames)?)?;
                if let Some(g) = ctx.gate {
                    out = out.mul(g)?;
                }
                h = h.add(out)?;
            }

            let a = blk.norm_mlp.forward(p, h)?;
            let m = blk.fc2.forward(p, blk.fc1.forward(p, a)?.gelu()?)?;
            h = h.add(m)?;
        }
        Ok(self.output.forward(p, self.norm_out.forward(p, h)?)?)
    }

    /// Evaluates the network on plain values, in chunks of at most [`PREDICT_CHUNK`] items.
    pub fn predict(
        &self,
        store: &ParamStore,
        x: &[LatentSeq],
        t: &[f64],
        bundles: &[&ConditioningBundle],
    ) -> Result<Vec<LatentSeq>, FlowError> {
        let first = x.first().ok_or(FlowError::EmptyBatch)?;
        let (frames, d) = first.shape();
        if let Some(bad) = x.iter().find(|s| s.shape() != (frames, d)) {
            return Err(FlowError::Shape {
                op: "predict",
                lhs: (frames, d),
                rhs: bad.shape(),
            });
        }
        if t.len() != x.len() || bundles.len() != x.len() {
            return Err(FlowError::InvalidConfig(format!(
                "batch of {} latents with {} times and {} bundles",
                x.len(),
                t.len(),
                bundles.len()
            )));
        }
        let mut out = Vec::with_capacity(x.len());
        for start in (0..x.len()).step_by(PREDICT_CHUNK) {
            let end = (start + PREDICT_CHUNK).min(x.len());
            let tape = Tape::new();
            let p = store.bind_frozen(&tape);
            let data: Vec<f64> = x[start..end].iter().flat_map(|s| s.values().iter().copied()).collect();
            let xv = tape.constant(Tensor::new(vec![end - start, frames, d], data)?);
            let v = self
                .forward(&p, xv, &t[start..end], &bundles[start..end])?
                .value()
                .into_data();
            for c in v.chunks(frames * d) {
                out.push(LatentSeq::from_rows(frames, d, c.to_vec())?);
            }
        }
        Ok(out)
    }
}
