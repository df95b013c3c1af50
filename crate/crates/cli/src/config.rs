use std::path::{Path, PathBuf};

use omniflow::audio::WavFormat;
use omniflow::dataforge::ForgeConfig;
use omniflow::diffsub::AdamWConfig;
use omniflow::flowdit::toy::EightGaussians;
use omniflow::flowdit::{ModelConfig, SamplerConfig};
use omniflow::spectral::{GriffinLimConfig, MelConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dataset {
    /// Editing triplets listed in `paths.manifest`.
    #[default]
    Manifest,
    /// The 8-Gaussians toy task.
    Toy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub dataset: Dataset,
    pub steps: u64,
    pub batch_size: usize,
    pub drop_prob: f64,
    /// Probability of masking a span of the reference mel stream of a training example.
    pub prompt_mask_prob: f64,
    pub log_every: u64,
    pub seed: u64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            dataset: Dataset::Manifest,
            steps: 1000,
            batch_size: 16,
            drop_prob: omniflow::conditioning::DEFAULT_DROP_PROB,
            prompt_mask_prob: 0.0,
            log_every: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditioningSettings {
    /// Seeds the frozen instruction-token table.
    pub token_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSettings {
    pub instruction: String,
    pub transcript: String,
    /// Latent frames generated by `sample`; `edit` uses the source length.
    pub frames: usize,
    pub wav_format: WavFormat,
}

impl Default for SampleSettings {
    fn default() -> Self {
        Self {
            instruction: String::new(),
            transcript: String::new(),
            frames: 172,
            wav_format: WavFormat::Pcm16,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub out: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub library: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub source: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub candidate: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub loss_csv: Option<PathBuf>,
    pub latent_out: Option<PathBuf>,
    /// Replayed multimodal features (FEATSEQ1) used instead of the token table.
    pub mm_features: Option<PathBuf>,
    /// Replayed sync features (FEATSEQ1, 25 rows per second).
    pub sync_features: Option<PathBuf>,
}

/// Everything a command needs, with production defaults for the front end, optimizer and
/// sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sample_rate: u32,
    /// Master seed; `--seed` copies it into every component seed.
    pub seed: u64,
    pub mel: MelConfig,
    pub model: ModelConfig,
    pub optimizer: AdamWConfig,
    pub train: TrainSettings,
    pub sampler: SamplerConfig,
    pub vocoder: GriffinLimConfig,
    pub conditioning: ConditioningSettings,
    pub sample: SampleSettings,
    pub forge: ForgeConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sample_rate: 44_100,
            seed: 0,
            mel: MelConfig::default(),
            model: ModelConfig::default(),
            optimizer: AdamWConfig::default(),
            train: TrainSettings::default(),
            sampler: SamplerConfig::default(),
            vocoder: GriffinLimConfig::default(),
            conditioning: ConditioningSettings::default(),
            sample: SampleSettings::default(),
            forge: ForgeConfig::default(),
            paths: Paths::default(),
        }
    }
}

/// Short flags and the config key each one sets.
pub const FLAG_ALIASES: &[(&str, &str)] = &[
    ("out", "paths.out"),
    ("manifest", "paths.manifest"),
    ("library", "paths.library"),
    ("checkpoint", "paths.checkpoint"),
    ("source", "paths.source"),
    ("reference", "paths.reference"),
    ("candidate", "paths.candidate"),
    ("report", "paths.report"),
    ("loss-csv", "paths.loss_csv"),
    ("latent-out", "paths.latent_out"),
    ("mm-features", "paths.mm_features"),
    ("sync-features", "paths.sync_features"),
    ("instruction", "sample.instruction"),
    ("transcript", "sample.transcript"),
    ("frames", "sample.frames"),
    ("dataset", "train.dataset"),
    ("steps", "train.steps"),
];

/// Parses a flag value: strings stay strings where the slot holds a string or a path,
/// everything else is read as JSON when it parses.
fn parse_value(raw: &str, slot: Option<&Value>, key: &str) -> Value {
    let textual = key.starts_with("paths.") || matches!(slot, Some(Value::String(_)));
    if textual {
        return Value::String(raw.to_string());
    }
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Sets `key` (dot-separated) in `root`. Missing leaves are created under existing
/// objects; unknown names are then rejected when the value is deserialized.
pub fn set_key(root: &mut Value, key: &str, raw: &str) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("malformed key {key:?}")));
    }
    let (leaf, parents) = parts.split_last().expect("split yields a part");
    let mut node = root;
    for p in parents {
        node = match node.get_mut(*p) {
            Some(child) if child.is_object() => child,
            _ => return Err(CliError::Config(format!("unknown config section {p:?} in {key:?}"))),
        };
    }
    let obj = node.as_object_mut().expect("checked above");
    let v = parse_value(raw, obj.get(*leaf), key);
    obj.insert(leaf.to_string(), v);
    Ok(())
}

impl RunConfig {
    /// Defaults, overlaid by an optional JSON file, then `--seed`, then the flag overrides
    /// in order. Validated before returning.
    pub fn resolve(file: Option<&Path>, seed: Option<u64>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut cfg = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("config {}: {e}", p.display())))?;
                serde_json::from_str::<RunConfig>(&text).map_err(|e| CliError::Config(format!("config {}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = seed {
            cfg.set_seed(s);
        }
        let mut v = serde_json::to_value(&cfg).map_err(|e| CliError::Config(e.to_string()))?;
        // skipped by serialization, so put back before overriding
        v["forge"]["workers"] = Value::from(cfg.forge.workers);
        for (k, raw) in overrides {
            set_key(&mut v, k, raw)?;
        }
        let cfg: RunConfig = serde_json::from_value(v).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = seed;
        self.sampler.seed = seed;
        self.vocoder.seed = seed;
        self.forge.seed = seed;
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.mel.sample_rate != self.sample_rate {
            return Err(CliError::Config(format!(
                "mel.sample_rate {} differs from sample_rate {}",
                self.mel.sample_rate, self.sample_rate
            )));
        }
        self.mel.validate()?;
        self.sampler.validate()?;
        if !(0.0..=1.0).contains(&self.train.drop_prob) || !(0.0..=1.0).contains(&self.train.prompt_mask_prob) {
            return Err(CliError::Config("train probabilities must lie in [0, 1]".into()));
        }
        if self.train.batch_size == 0 {
            return Err(CliError::Config("train.batch_size must be positive".into()));
        }
        if self.vocoder.iterations == 0 {
            return Err(CliError::Config("vocoder.iterations must be positive".into()));
        }
        Ok(())
    }

    /// Model layout actually trained for the configured dataset: the toy task fixes the
    /// stream widths, audio ties latent and mel widths to the mel bins.
    pub fn effective_model(&self) -> ModelConfig {
        match self.train.dataset {
            Dataset::Toy => {
                let toy = EightGaussians::model_config();
                ModelConfig {
                    latent_dim: toy.latent_dim,
                    mm_dim: toy.mm_dim,
                    sync_dim: toy.sync_dim,
                    mel_dim: toy.mel_dim,
                    ..self.model.clone()
                }
            }
            Dataset::Manifest => ModelConfig {
                latent_dim: self.mel.n_mels,
                mel_dim: self.mel.n_mels,
                ..self.model.clone()
            },
        }
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn require<'a>(&self, path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
        path.as_deref().ok_or_else(|| CliError::Config(format!("missing --{flag}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use omniflow::flowdit::Solver;

    #[test]
    fn overrides_and_seed() {
        let o = |k: &str, v: &str| (k.to_string(), v.to_string());
        let cfg = RunConfig::resolve(
            None,
            Some(9),
            &[
                o("sampler.steps", "10"),
                o("sampler.solver", "midpoint"),
                o("paths.out", "123"),
                o("sample.instruction", "42"),
                o("sampler.seed", "3"),
                o("forge.workers", "2"),
            ],
        )
        .unwrap();
        assert_eq!((cfg.sampler.steps, cfg.sampler.solver, cfg.sampler.seed), (10, Solver::Midpoint, 3));
        assert_eq!(cfg.paths.out.as_deref(), Some(Path::new("123")));
        assert_eq!(cfg.sample.instruction, "42");
        assert_eq!((cfg.seed, cfg.train.seed, cfg.forge.seed, cfg.vocoder.seed), (9, 9, 9, 9));
        assert_eq!(cfg.forge.workers, 2);
    }

    #[test]
    fn bad_overrides_are_config_errors() {
        let one = |k: &str, v: &str| RunConfig::resolve(None, None, &[(k.to_string(), v.to_string())]);
        for (k, v) in [
            ("sampler.stepz", "1"),
            ("nosuch.steps", "1"),
            ("sampler.steps", "many"),
            ("sampler..steps", "1"),
            ("sampler.steps", "0"),
            ("mel.sample_rate", "16000"),
        ] {
            assert!(matches!(one(k, v), Err(CliError::Config(_))), "{k}");
        }
        let both = RunConfig::resolve(
            None,
            None,
            &[("sample_rate".into(), "16000".into()), ("mel.sample_rate".into(), "16000".into()), ("mel.f_max".into(), "8000".into())],
        );
        assert!(both.is_ok());
    }

    #[test]
    fn config_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::default();
        cfg.sampler.guidance_scale = 2.5;
        cfg.paths.out = Some("x.wav".into());
        let p = dir.path().join("run.json");
        std::fs::write(&p, serde_json::to_string(&cfg).unwrap()).unwrap();
        let back = RunConfig::resolve(Some(&p), None, &[]).unwrap();
        assert_eq!(back, cfg);
        std::fs::write(&p, "{\"sampler\": {\"bogus\": 1}}").unwrap();
        assert!(matches!(RunConfig::resolve(Some(&p), None, &[]), Err(CliError::Config(_))));
    }
}
