use rand::Rng;
use serde::{Deserialize, Serialize};

use super::library::ClipLibrary;
use super::scene::{compose_soundscape, EventSpec, SceneSpec, Soundscape};
use super::DataforgeError;
use crate::audio::AudioBuffer;
use crate::rng::item_rng;

const TEMPLATE_STREAM: u64 = 0x7E3A;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Add,
    Remove,
    Extract,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Add, Task::Remove, Task::Extract];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Add => "add",
            Task::Remove => "remove",
            Task::Extract => "extract",
        }
    }

    pub fn templates(self) -> &'static [&'static str; 5] {
        match self {
            Task::Add => &ADD_TEMPLATES,
            Task::Remove => &REMOVE_TEMPLATES,
            Task::Extract => &EXTRACT_TEMPLATES,
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

const ADD_TEMPLATES: [&str; 5] = [
    "Add the sound of {label}.",
    "Add {label} to the recording.",
    "Insert {label} into this clip.",
    "Mix in {label}.",
    "Include {label} somewhere in the scene.",
];
const REMOVE_TEMPLATES: [&str; 5] = [
    "Remove the sound of {label}.",
    "Remove {label} from the recording.",
    "Delete {label} from this clip.",
    "Take out {label}.",
    "Get rid of {label} and keep everything else.",
];
const EXTRACT_TEMPLATES: [&str; 5] = [
    "Extract the sound of {label}.",
    "Extract {label} from the recording.",
    "Isolate {label}.",
    "Keep only {label}.",
    "Separate {label} from the background.",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Synthesis,
    RealReplay,
}

/// An editing example. Paths are relative to the dataset root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditTriplet {
    pub id: String,
    pub task: Task,
    pub instruction: String,
    pub source_path: String,
    pub target_path: String,
    pub event: EventSpec,
    /// Master seed of the scene the triplet was cut from.
    pub seed: u64,
    pub provenance: Provenance,
}

/// A triplet with its audio, before anything is written.
#[derive(Debug, Clone, PartialEq)]
pub struct ForgedTriplet {
    pub triplet: EditTriplet,
    pub source: AudioBuffer,
    pub target: AudioBuffer,
    /// The edited event on its own span, used by the filters.
    pub event_audio: AudioBuffer,
}

pub fn source_path(id: &str) -> String {
    format!("audio/{id}_src.wav")
}

pub fn target_path(id: &str) -> String {
    format!("audio/{id}_tgt.wav")
}

/// One of the task's five templates with `{label}` filled in; the choice is seeded by
/// `event_seed`.
pub fn instruction(task: Task, label: &str, event_seed: u64) -> String {
    let mut rng = item_rng(event_seed, TEMPLATE_STREAM, task as u64);
    let templates = task.templates();
    templates[rng.random_range(0..templates.len())].replace("{label}", label)
}

/// Cuts a triplet from an already composed scene. With M the mixture, M₋ the mixture
/// without the event and S its stem: add maps M₋ to M, remove maps M to M₋, extract maps
/// M to S.
pub fn triplet_from_soundscape(
    task: Task,
    scene: &SceneSpec,
    soundscape: &Soundscape,
    event_index: usize,
    id: &str,
) -> Result<ForgedTriplet, DataforgeError> {
    let event = scene
        .events
        .get(event_index)
        .ok_or(DataforgeError::EventIndex {
            index: event_index,
            len: scene.events.len(),
        })?
        .clone();
    let full = soundscape.mixture.clone();
    let (source, target) = match task {
        Task::Add => (soundscape.mixture_without(event_index), full),
        Task::Remove => (full, soundscape.mixture_without(event_index)),
        Task::Extract => (full, soundscape.stems[event_index].clone()),
    };
    Ok(ForgedTriplet {
        triplet: EditTriplet {
            id: id.to_string(),
            task,
            instruction: instruction(task, &event.label, event.seed),
            source_path: source_path(id),
            target_path: target_path(id),
            event,
            seed: scene.seed,
            provenance: Provenance::Synthesis,
        },
        source,
        target,
        event_audio: soundscape.event_audio(event_index),
    })
}

pub fn make_triplet(
    task: Task,
    scene: &SceneSpec,
    event_index: usize,
    library: &ClipLibrary,
    id: &str,
) -> Result<ForgedTriplet, DataforgeError> {
    if event_index >= scene.events.len() {
        return Err(DataforgeError::EventIndex {
            index: event_index,
            len: scene.events.len(),
        });
    }
    let soundscape = compose_soundscape(scene, library)?;
    triplet_from_soundscape(task, scene, &soundscape, event_index, id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataforge::scene::{draw_scene, SceneConfig};

    #[test]
    fn templates_mention_label() {
        for task in Task::ALL {
            for t in task.templates() {
                assert_eq!(t.matches("{label}").count(), 1);
            }
            for seed in 0..50 {
                assert!(instruction(task, "dog barking", seed).contains("dog barking"));
            }
            let picked: std::collections::HashSet<_> = (0..200).map(|s| instruction(task, "x", s)).collect();
            assert_eq!(picked.len(), 5);
        }
    }

    #[test]
    fn task_algebra() {
        let lib = ClipLibrary::synthetic(16_000, 3.0, 2).unwrap();
        let cfg = SceneConfig {
            duration_s: 3.0,
            events_per_scene: 2,
        };
        for k in 0..4 {
            let scene = draw_scene(&lib, 5, k, &cfg).unwrap();
            for e in 0..2 {
                let [add, remove, extract] =
                    Task::ALL.map(|t| make_triplet(t, &scene, e, &lib, &format!("s{k}-{t}")).unwrap());
                assert_eq!(add.target, remove.source);
                assert_eq!(add.source, remove.target);
                assert_eq!(extract.source, add.target);
                let m = extract.source.samples();
                let s = extract.target.samples();
                let rest = add.source.samples();
                for i in 0..m.len() {
                    assert_eq!(s[i] + (m[i] - s[i]), m[i]);
                    assert_eq!(rest[i] + s[i], m[i]);
                }
                assert_eq!(add.triplet.event, scene.events[e]);
                assert!(remove.triplet.instruction.contains(&scene.events[e].label));
                assert_eq!(add.triplet.source_path, format!("audio/s{k}-add_src.wav"));
            }
        }
        let scene = draw_scene(&lib, 5, 0, &cfg).unwrap();
        assert!(matches!(
            make_triplet(Task::Add, &scene, 2, &lib, "x"),
            Err(DataforgeError::EventIndex { index: 2, len: 2 })
        ));
    }

    #[test]
    fn serde_names() {
        assert_eq!(serde_json::to_string(&Task::Extract).unwrap(), "\"extract\"");
        assert_eq!(serde_json::to_string(&Provenance::RealReplay).unwrap(), "\"real-replay\"");
    }
}
