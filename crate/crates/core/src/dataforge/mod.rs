//! Synthetic editing data: soundscapes composed from labeled clips, add/remove/extract
//! triplets cut from them, candidate filtering and the dataset manifest.

mod filter;
mod forge;
mod library;
mod manifest;
mod scene;
mod triplet;

pub use filter::{
    filter_pipeline, Filter, FilterReport, PassAllScorer, Rejection, SemanticFilter, SemanticScorer, StageCount,
    VadFilter, DEFAULT_MIN_ACTIVITY,
};
pub use forge::{forge, forge_scene, ForgeConfig, ForgeReport, SnrReference, SplitPreset, REFERENCE_PER_TASK};
pub use library::{to_pcm_grid, Clip, ClipLibrary, BACKGROUND_DIR, SYNTHETIC_BACKGROUNDS, SYNTHETIC_LABELS};
pub use manifest::{write_manifest, Manifest, ManifestEvent, ManifestItem, SplitCounts, MANIFEST_FILE, MANIFEST_VERSION};
pub use scene::{
    compose_soundscape, draw_event, draw_scene, scene_samples, stretched_len, EventSpec, SceneConfig, SceneSpec,
    Soundscape, DEFAULT_SCENE_DURATION_S, PEAK_CEILING, PITCH_RANGE_SEMITONES, SNR_RANGE_DB, STRETCH_RANGE,
};
pub use triplet::{instruction, make_triplet, triplet_from_soundscape, EditTriplet, ForgedTriplet, Provenance, Task};

use thiserror::Error;

use crate::audio::AudioError;

#[derive(Debug, Error)]
pub enum DataforgeError {
    #[error("unknown clip {0}")]
    UnknownClip(String),
    #[error("invalid event: {0}")]
    InvalidEvent(String),
    #[error("clip {clip} needs {samples} samples but the scene has {scene}")]
    Overrun { clip: String, samples: usize, scene: usize },
    #[error("background {0} is silent under the event")]
    SilentBackground(String),
    #[error("event index {index} out of range for {len} events")]
    EventIndex { index: usize, len: usize },
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("library has no {0}")]
    EmptyLibrary(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
