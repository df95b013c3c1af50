use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::codec::{CodecStats, LatentCodec};
use super::config::ModelConfig;
use super::model::{Dit, VelocityModel};
use super::{FlowError, LatentSeq};
use crate::conditioning::ConditioningBundle;
use crate::diffsub::{load_checkpoint, save_checkpoint, ParamStore};
use crate::rng::named_rng;

pub const SIDECAR_FORMAT: &str = "omniflow-flow-model/1";

/// JSON metadata stored next to a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub format: String,
    pub model: ModelConfig,
    pub codec: Option<CodecStats>,
    pub seed: u64,
    pub step: u64,
    pub n_params: usize,
}

/// Network layout, parameters with optimizer moments, codec statistics and init seed.
#[derive(Debug, Clone)]
pub struct FlowModelState {
    pub dit: Dit,
    pub store: ParamStore,
    pub codec: LatentCodec,
    pub seed: u64,
}

impl FlowModelState {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, FlowError> {
        let mut store = ParamStore::new();
        let dit = Dit::new(&mut store, config, &mut named_rng(seed, "flow-init"))?;
        Ok(Self {
            dit,
            store,
            codec: LatentCodec::default(),
            seed,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.dit.config
    }

    pub fn step(&self) -> u64 {
        self.store.step
    }

    pub fn sidecar(&self) -> Sidecar {
        Sidecar {
            format: SIDECAR_FORMAT.to_string(),
            model: self.dit.config.clone(),
            codec: self.codec.stats.clone(),
            seed: self.seed,
            step: self.store.step,
            n_params: self.store.numel(),
        }
    }

    /// `model.ckpt` → `model.json`.
    pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
        checkpoint.with_extension("json")
    }

    pub fn save(&self, checkpoint: &Path) -> Result<(), FlowError> {
        save_checkpoint(&self.store, checkpoint)?;
        let mut json = serde_json::to_string_pretty(&self.sidecar())?;
        json.push('\n');
        std::fs::write(Self::sidecar_path(checkpoint), json)?;
        Ok(())
    }

    /// Rebuilds the layout from the sidecar and checks the checkpoint against it.
    pub fn load(checkpoint: &Path) -> Result<Self, FlowError> {
        let side: Sidecar = serde_json::from_slice(&std::fs::read(Self::sidecar_path(checkpoint))?)?;
        if side.format != SIDECAR_FORMAT {
            return Err(FlowError::State(format!("unknown sidecar format {:?}", side.format)));
        }
        let store = load_checkpoint(checkpoint)?;
        let fresh = Self::new(side.model, side.seed)?;
        let layout_matches = store.len() == fresh.store.len()
            && store
                .iter()
                .zip(fresh.store.iter())
                .all(|(a, b)| a.name == b.name && a.shape == b.shape);
        if !layout_matches {
            return Err(FlowError::State(
                "checkpoint parameters do not match the model configuration".into(),
            ));
        }
        if store.step != side.step {
            return Err(FlowError::State(format!(
                "checkpoint step {} but sidecar step {}",
                store.step, side.step
            )));
        }
        Ok(Self {
            dit: fresh.dit,
            store,
            codec: LatentCodec { stats: side.codec },
            seed: side.seed,
        })
    }
}

impl VelocityModel for FlowModelState {
    fn latent_dim(&self) -> usize {
        self.dit.config.latent_dim
    }

    fn velocity(
        &self,
        x: &[LatentSeq],
        t: &[f64],
        bundles: &[&ConditioningBundle],
    ) -> Result<Vec<LatentSeq>, FlowError> {
        self.dit.predict(&self.store, x, t, bundles)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            latent_dim: 4,
            mel_dim: 4,
            sync_dim: 0,
            mm_dim: 3,
            trans_dim: 4,
            context_dim: 8,
            depth: 1,
            width: 8,
            heads: 2,
            encoder_blocks: 1,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut s = FlowModelState::new(tiny(), 9).unwrap();
        s.codec = LatentCodec::with_stats(CodecStats {
            mean: vec![0.1, -3.3, 1.0 / 3.0, 7e-12],
            std: vec![1.0, 0.7, 2.0f64.sqrt(), 1e-3],
        });
        s.store.step = 0;
        s.save(&path).unwrap();
        let back = FlowModelState::load(&path).unwrap();
        assert_eq!(back.store, s.store);
        assert_eq!(back.codec, s.codec);
        assert_eq!(back.sidecar(), s.sidecar());

        let mut other = tiny();
        other.depth = 2;
        let mut side = s.sidecar();
        side.model = other;
        std::fs::write(FlowModelState::sidecar_path(&path), serde_json::to_string(&side).unwrap()).unwrap();
        assert!(matches!(FlowModelState::load(&path), Err(FlowError::State(_))));
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = FlowModelState::new(tiny(), 3).unwrap();
        let b = FlowModelState::new(tiny(), 3).unwrap();
        let c = FlowModelState::new(tiny(), 4).unwrap();
        assert_eq!(a.store, b.store);
        assert_ne!(a.store, c.store);
    }
}
