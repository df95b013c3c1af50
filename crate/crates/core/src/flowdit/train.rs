use serde::{Deserialize, Serialize};

use super::loss::{rf_loss_with, LossDraws};
use super::state::FlowModelState;
use super::{FlowError, LatentSeq};
use crate::conditioning::{ConditioningBundle, DEFAULT_DROP_PROB};
use crate::diffsub::{adamw_step, AdamWConfig, Tape};
use crate::rng::item_rng;

const LOSS_STREAM: u64 = 0x6c6f_7373;

/// One training pair: clean latent and its conditioning.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub x0: LatentSeq,
    pub bundle: ConditioningBundle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: u64,
    pub optimizer: AdamWConfig,
    pub drop_prob: f64,
    pub seed: u64,
    /// Progress is logged every this many steps; 0 disables it.
    pub log_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            optimizer: AdamWConfig::default(),
            drop_prob: DEFAULT_DROP_PROB,
            seed: 0,
            log_every: 100,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// `(step, loss)` for every optimizer step taken.
    pub losses: Vec<(u64, f64)>,
}

impl TrainReport {
    /// Mean loss over the half-open index range of recorded steps.
    pub fn mean_loss(&self, range: std::ops::Range<usize>) -> f64 {
        let s = &self.losses[range];
        s.iter().map(|(_, l)| l).sum::<f64>() / s.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for (s, l) in &self.losses {
            out.push_str(&format!("{s},{l}\n"));
        }
        out
    }
}

/// Runs up to `cfg.steps` AdamW steps, one per batch, stopping early if `batches` ends.
///
/// The randomness of step `k` depends only on `(cfg.seed, k)`, so a run is reproducible
/// from the seed and the batch order. A non-finite loss stops training with its step index
/// and leaves the parameters as they were before that step.
pub fn train<I>(state: &mut FlowModelState, batches: I, cfg: &TrainConfig) -> Result<TrainReport, FlowError>
where
    I: IntoIterator<Item = Result<Vec<Example>, FlowError>>,
{
    let mut report = TrainReport::default();
    let mut batches = batches.into_iter();
    for _ in 0..cfg.steps {
        let Some(batch) = batches.next() else { break };
        let batch = batch?;
        let step = state.store.step + 1;
        let mut rng = item_rng(cfg.seed, LOSS_STREAM, step);
        let draws = LossDraws::draw(&batch, cfg.drop_prob, &mut rng)?;

        let tape = Tape::new();
        let p = state.store.bind(&tape);
        let loss = rf_loss_with(&tape, &batch, &draws, |x, t, b| state.dit.forward(&p, x, t, b))?;
        let value = loss.item()?;
        if !value.is_finite() {
            return Err(FlowError::NonFiniteLoss { step, loss: value });
        }
        let mut grads = tape.backward(loss)?;
        let grads: Vec<_> = p.iter().map(|&v| grads.take_or_zeros(v)).collect();
        drop(tape);
        adamw_step(&mut state.store, &grads, &cfg.optimizer, step)?;

        report.losses.push((step, value));
        if cfg.log_every > 0 && step % cfg.log_every == 0 {
            let k = report.losses.len();
            let window = report.mean_loss(k.saturating_sub(cfg.log_every as usize)..k);
            log::info!("step {step}: loss {value:.5} (window mean {window:.5})");
        }
    }
    Ok(report)
}
