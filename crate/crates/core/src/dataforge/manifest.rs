use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::triplet::{EditTriplet, Provenance, Task};
use super::DataforgeError;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEvent {
    pub label: String,
    pub onset_s: f64,
    pub snr_db: f64,
    pub pitch_semitones: f64,
    pub stretch: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestItem {
    pub id: String,
    pub task: Task,
    pub instruction: String,
    pub source_path: String,
    pub target_path: String,
    pub event: ManifestEvent,
    pub seed: u64,
    pub provenance: Provenance,
}

impl From<&EditTriplet> for ManifestItem {
    fn from(t: &EditTriplet) -> Self {
        Self {
            id: t.id.clone(),
            task: t.task,
            instruction: t.instruction.clone(),
            source_path: t.source_path.clone(),
            target_path: t.target_path.clone(),
            event: ManifestEvent {
                label: t.event.label.clone(),
                onset_s: t.event.onset_s,
                snr_db: t.event.snr_db,
                pitch_semitones: t.event.pitch_semitones,
                stretch: t.event.stretch,
            },
            seed: t.seed,
            provenance: t.provenance,
        }
    }
}

/// Per-task item targets of a split preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitCounts {
    pub preset: String,
    pub scale: f64,
    pub per_task: BTreeMap<Task, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub items: Vec<ManifestItem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splits: Option<SplitCounts>,
    /// Resolved configuration of the run that produced the manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

impl Manifest {
    /// Items sorted by id; duplicate ids are an error.
    pub fn from_triplets<'a>(triplets: impl IntoIterator<Item = &'a EditTriplet>) -> Result<Self, DataforgeError> {
        let mut items: Vec<ManifestItem> = triplets.into_iter().map(ManifestItem::from).collect();
        items.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = items.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(DataforgeError::DuplicateId(w[0].id.clone()));
        }
        Ok(Self {
            version: MANIFEST_VERSION,
            items,
            splits: None,
            config: None,
        })
    }

    pub fn to_json(&self) -> Result<String, DataforgeError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Writes `root/manifest.json`.
    pub fn write(&self, root: &Path) -> Result<PathBuf, DataforgeError> {
        let path = root.join(MANIFEST_FILE);
        std::fs::write(&path, self.to_json()?)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self, DataforgeError> {
        let m: Manifest = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if m.version != MANIFEST_VERSION {
            return Err(DataforgeError::InvalidConfig(format!("manifest version {}", m.version)));
        }
        let mut seen = BTreeSet::new();
        for it in &m.items {
            if !seen.insert(it.id.as_str()) {
                return Err(DataforgeError::DuplicateId(it.id.clone()));
            }
        }
        Ok(m)
    }

    pub fn count(&self, task: Task) -> usize {
        self.items.iter().filter(|i| i.task == task).count()
    }
}

pub fn write_manifest<'a>(
    triplets: impl IntoIterator<Item = &'a EditTriplet>,
    root: &Path,
) -> Result<PathBuf, DataforgeError> {
    Manifest::from_triplets(triplets)?.write(root)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataforge::scene::EventSpec;

    fn triplet(id: &str, task: Task) -> EditTriplet {
        EditTriplet {
            id: id.into(),
            task,
            instruction: format!("{task} the bell"),
            source_path: format!("audio/{id}_src.wav"),
            target_path: format!("audio/{id}_tgt.wav"),
            event: EventSpec {
                clip: "bell/a".into(),
                label: "bell".into(),
                onset_s: 0.1 + 0.2,
                snr_db: 2.123_456_789_012_345,
                pitch_semitones: -1.0 / 3.0,
                stretch: 1.1,
                seed: 3,
            },
            seed: u64::MAX,
            provenance: Provenance::Synthesis,
        }
    }

    #[test]
    fn empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(&[], dir.path()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(v, serde_json::json!({"version": 1, "items": []}));
    }

    #[test]
    fn round_trip_and_order() {
        let dir = tempfile::tempdir().unwrap();
        let ts = [triplet("s2-add", Task::Add), triplet("s1-remove", Task::Remove), triplet("s1-add", Task::Add)];
        let path = write_manifest(&ts, dir.path()).unwrap();
        let m = Manifest::load(&path).unwrap();
        let ids: Vec<_> = m.items.iter().map(|i| i.id.as_str()).collect();
        assert_eq!(ids, ["s1-add", "s1-remove", "s2-add"]);
        assert_eq!(m.items[2], ManifestItem::from(&ts[0]));
        assert_eq!(m.items[0].event.onset_s, 0.1 + 0.2);
        assert_eq!(m.count(Task::Add), 2);

        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let keys: Vec<_> = v["items"][0].as_object().unwrap().keys().cloned().collect();
        let mut expect = ["id", "task", "instruction", "source_path", "target_path", "event", "seed", "provenance"];
        expect.sort();
        assert_eq!(keys, expect);
        assert_eq!(v["items"][0]["provenance"], "synthesis");
    }

    #[test]
    fn duplicates_and_bad_root() {
        let ts = [triplet("a", Task::Add), triplet("a", Task::Remove)];
        assert!(matches!(Manifest::from_triplets(&ts), Err(DataforgeError::DuplicateId(_))));
        let missing = Path::new("/nonexistent/dir/for/manifest");
        assert!(matches!(write_manifest(&[], missing), Err(DataforgeError::Io(_))));
    }
}
