use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::filter::{filter_pipeline, Filter, FilterReport, SemanticFilter, VadFilter};
use super::library::ClipLibrary;
use super::manifest::{Manifest, SplitCounts};
use super::scene::{compose_soundscape, draw_scene, SceneConfig};
use super::triplet::{triplet_from_soundscape, ForgedTriplet, Task};
use super::DataforgeError;
use crate::audio::{write_wav, WavFormat};
use crate::rng::item_rng;

/// Synthesis items per task in the full-scale reference split.
pub const REFERENCE_PER_TASK: usize = 150_000;
const EVENT_PICK_STREAM: u64 = 0xE7E;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SplitPreset {
    /// Equal add/remove/extract counts, `round(150000 * scale)` each.
    #[serde(rename = "paper-shape")]
    ReferenceShape { scale: f64 },
}

impl SplitPreset {
    pub fn per_task(&self) -> usize {
        match *self {
            SplitPreset::ReferenceShape { scale } => (REFERENCE_PER_TASK as f64 * scale).round() as usize,
        }
    }

    pub fn counts(&self) -> SplitCounts {
        match *self {
            SplitPreset::ReferenceShape { scale } => SplitCounts {
                preset: "paper-shape".into(),
                scale,
                per_task: Task::ALL.iter().map(|&t| (t, self.per_task())).collect(),
            },
        }
    }
}

/// Where the SNR reference power is measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnrReference {
    #[default]
    PostTransform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForgeConfig {
    pub seed: u64,
    pub scene: SceneConfig,
    /// Kept items per task; overridden by `preset`.
    pub per_task: usize,
    pub preset: Option<SplitPreset>,
    /// Scenes tried per requested item before giving up.
    pub max_attempts_factor: usize,
    pub vad: VadFilter,
    pub semantic_threshold: f64,
    pub snr_reference: SnrReference,
    pub wav_format: WavFormat,
    /// 0 uses the available parallelism. Not echoed: it never changes the output.
    #[serde(skip_serializing)]
    pub workers: usize,
}

impl Default for ForgeConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scene: SceneConfig::default(),
            per_task: 10,
            preset: None,
            max_attempts_factor: 20,
            vad: VadFilter::default(),
            semantic_threshold: 0.5,
            snr_reference: SnrReference::PostTransform,
            wav_format: WavFormat::Pcm16,
            workers: 0,
        }
    }
}

impl ForgeConfig {
    pub fn target_per_task(&self) -> usize {
        self.preset.map_or(self.per_task, |p| p.per_task())
    }

    fn workers(&self) -> usize {
        match self.workers {
            0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
            n => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgeReport {
    pub scenes: usize,
    pub kept: BTreeMap<Task, usize>,
    pub filter: FilterReport,
}

/// The add, remove and extract triplets of scene `k`, all editing the same event.
pub fn forge_scene(library: &ClipLibrary, cfg: &ForgeConfig, k: u64) -> Result<Vec<ForgedTriplet>, DataforgeError> {
    let scene = draw_scene(library, cfg.seed, k, &cfg.scene)?;
    if scene.events.is_empty() {
        return Err(DataforgeError::InvalidConfig("scenes need at least one event".into()));
    }
    let event = item_rng(cfg.seed, EVENT_PICK_STREAM, k).random_range(0..scene.events.len());
    let soundscape = compose_soundscape(&scene, library)?;
    Task::ALL
        .iter()
        .map(|&t| triplet_from_soundscape(t, &scene, &soundscape, event, &format!("s{k:06}-{t}")))
        .collect()
}

/// Forges and filters scenes until every task holds its target count (or the attempt
/// budget runs out), then writes `root/audio/*.wav` and `root/manifest.json`. Scenes are
/// composed in parallel; which items are kept depends only on the seed and the library.
pub fn forge(library: &ClipLibrary, cfg: &ForgeConfig, root: &Path) -> Result<(Manifest, ForgeReport), DataforgeError> {
    let target = cfg.target_per_task();
    let budget = target.saturating_mul(cfg.max_attempts_factor);
    let stages: Vec<Box<dyn Filter>> = vec![
        Box::new(cfg.vad),
        Box::new(SemanticFilter {
            threshold: cfg.semantic_threshold,
            ..SemanticFilter::default()
        }),
    ];
    let workers = cfg.workers();
    let mut kept: Vec<ForgedTriplet> = Vec::new();
    let mut counts: BTreeMap<Task, usize> = Task::ALL.iter().map(|&t| (t, 0)).collect();
    let mut report = FilterReport::default();
    let mut next = 0usize;
    std::fs::create_dir_all(root.join("audio"))?;

    while next < budget && counts.values().any(|&c| c < target) {
        let chunk: Vec<u64> = (next..budget.min(next + 2 * workers)).map(|k| k as u64).collect();
        next += chunk.len();
        let forged: Vec<Result<Vec<ForgedTriplet>, DataforgeError>> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .chunks(chunk.len().div_ceil(workers))
                .map(|part| s.spawn(move || part.iter().map(|&k| forge_scene(library, cfg, k)).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("forge worker panicked"))
                .collect()
        });
        for trio in forged {
            let (passed, r) = filter_pipeline(trio?, &stages);
            report.absorb(r);
            for c in passed {
                let n = counts.get_mut(&c.triplet.task).expect("all tasks counted");
                if *n < target {
                    *n += 1;
                    write_wav(&c.source, &root.join(&c.triplet.source_path), cfg.wav_format)?;
                    write_wav(&c.target, &root.join(&c.triplet.target_path), cfg.wav_format)?;
                    kept.push(c);
                }
            }
            if counts.values().all(|&c| c >= target) {
                break;
            }
        }
    }
    if counts.values().any(|&c| c < target) {
        log::warn!("forge stopped after {next} scenes with {counts:?} of {target} per task");
    }

    let mut manifest = Manifest::from_triplets(kept.iter().map(|c| &c.triplet))?;
    manifest.splits = cfg.preset.map(|p| p.counts());
    manifest.config = Some(serde_json::to_value(cfg)?);
    manifest.write(root)?;
    Ok((
        manifest,
        ForgeReport {
            scenes: next,
            kept: counts,
            filter: report,
        },
    ))
}
