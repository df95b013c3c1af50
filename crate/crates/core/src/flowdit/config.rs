use serde::{Deserialize, Serialize};

use super::FlowError;

/// Where each conditioning source enters the network. Multimodal features always go to
/// the cross-attention context; the others are either context tokens or channels
/// concatenated to the noisy latent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Injection {
    /// Every source is a context token.
    AllContext,
    /// Sync features in context, mel frames concatenated.
    MelCat,
    /// Transcript in context, sync and mel concatenated.
    #[default]
    Hybrid,
    /// Only multimodal features in context; transcript, sync and mel concatenated.
    TransCat,
}

impl Injection {
    pub const ALL: [Injection; 4] = [
        Injection::AllContext,
        Injection::MelCat,
        Injection::Hybrid,
        Injection::TransCat,
    ];

    pub fn transcript_in_context(self) -> bool {
        !matches!(self, Injection::TransCat)
    }

    pub fn sync_in_context(self) -> bool {
        matches!(self, Injection::AllContext | Injection::MelCat)
    }

    pub fn mel_in_context(self) -> bool {
        matches!(self, Injection::AllContext)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Latent channels per frame.
    pub latent_dim: usize,
    pub mm_dim: usize,
    /// Width of the transcript encoder.
    pub trans_dim: usize,
    /// Channel split of the frame-aligned stream: `[sync | mel]`.
    pub sync_dim: usize,
    pub mel_dim: usize,
    pub context_dim: usize,
    pub depth: usize,
    pub width: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    /// Sinusoidal time features (sin and cos halves); must be even.
    pub time_features: usize,
    /// Width of the time channel block when no source is concatenated.
    pub time_slot: usize,
    pub encoder_blocks: usize,
    pub injection: Injection,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            latent_dim: 100,
            mm_dim: 32,
            trans_dim: 32,
            sync_dim: 8,
            mel_dim: 100,
            context_dim: 64,
            depth: 4,
            width: 64,
            heads: 4,
            mlp_ratio: 4,
            time_features: 32,
            time_slot: 16,
            encoder_blocks: 4,
            injection: Injection::Hybrid,
        }
    }
}

impl ModelConfig {
    /// 4 blocks, width 64, 4 heads.
    pub fn toy(latent_dim: usize, mm_dim: usize, sync_dim: usize, mel_dim: usize) -> Self {
        Self {
            latent_dim,
            mm_dim,
            sync_dim,
            mel_dim,
            ..Self::default()
        }
    }

    /// Production-size reference: 36 blocks, width 2048, 32 heads.
    pub fn production_scale() -> Self {
        Self {
            depth: 36,
            width: 2048,
            heads: 32,
            context_dim: 2048,
            trans_dim: 512,
            mm_dim: 3584,
            sync_dim: 768,
            ..Self::default()
        }
    }

    pub fn low_dim(&self) -> usize {
        self.sync_dim + self.mel_dim
    }

    /// Channels of the frame-aligned block concatenated to the latent, before the time
    /// slot fallback.
    pub fn concat_source_dim(&self) -> usize {
        let inj = self.injection;
        let mut d = 0;
        if !inj.transcript_in_context() {
            d += self.trans_dim;
        }
        if !inj.sync_in_context() {
            d += self.sync_dim;
        }
        if !inj.mel_in_context() {
            d += self.mel_dim;
        }
        d
    }

    /// Width of the block the time embedding is added to.
    pub fn concat_dim(&self) -> usize {
        match self.concat_source_dim() {
            0 => self.time_slot,
            d => d,
        }
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        let bad = |m: String| Err(FlowError::InvalidConfig(m));
        if self.latent_dim == 0 || self.width == 0 || self.context_dim == 0 || self.trans_dim == 0 {
            return bad("latent_dim, width, context_dim and trans_dim must be positive".into());
        }
        if self.heads == 0 || self.width % self.heads != 0 {
            return bad(format!("width {} not divisible by {} heads", self.width, self.heads));
        }
        if self.time_features == 0 || self.time_features % 2 != 0 {
            return bad(format!("time_features {} must be even and positive", self.time_features));
        }
        if self.mlp_ratio == 0 || self.depth == 0 {
            return bad("depth and mlp_ratio must be positive".into());
        }
        if self.concat_source_dim() == 0 && self.time_slot == 0 {
            return bad("time_slot must be positive when nothing is concatenated".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    #[default]
    Euler,
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub steps: usize,
    pub guidance_scale: f64,
    pub solver: Solver,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            guidance_scale: 6.0,
            solver: Solver::Euler,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        if self.steps == 0 {
            return Err(FlowError::InvalidConfig("steps must be >= 1".into()));
        }
        if !(self.guidance_scale >= 0.0) || !self.guidance_scale.is_finite() {
            return Err(FlowError::InvalidConfig(format!(
                "guidance scale {} must be finite and >= 0",
                self.guidance_scale
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let t = ModelConfig::default();
        assert_eq!((t.depth, t.width, t.heads), (4, 64, 4));
        let p = ModelConfig::production_scale();
        assert_eq!((p.depth, p.width, p.heads), (36, 2048, 32));
        p.validate().unwrap();
        let s = SamplerConfig::default();
        assert_eq!((s.steps, s.guidance_scale, s.solver), (100, 6.0, Solver::Euler));
    }

    #[test]
    fn concat_widths_per_injection() {
        let c = |injection| ModelConfig {
            trans_dim: 3,
            sync_dim: 5,
            mel_dim: 7,
            time_slot: 11,
            injection,
            ..ModelConfig::default()
        };
        assert_eq!(c(Injection::AllContext).concat_dim(), 11);
        assert_eq!(c(Injection::MelCat).concat_dim(), 7);
        assert_eq!(c(Injection::Hybrid).concat_dim(), 12);
        assert_eq!(c(Injection::TransCat).concat_dim(), 15);
    }

    #[test]
    fn validation() {
        let mut c = ModelConfig::default();
        c.heads = 3;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::default();
        c.time_features = 7;
        assert!(c.validate().is_err());
        let s = SamplerConfig {
            steps: 0,
            ..SamplerConfig::default()
        };
        assert!(s.validate().is_err());
        let s = SamplerConfig {
            guidance_scale: -1.0,
            ..SamplerConfig::default()
        };
        assert!(s.validate().is_err());
        assert_eq!(
            serde_json::from_str::<Injection>("\"trans_cat\"").unwrap(),
            Injection::TransCat
        );
    }
}
