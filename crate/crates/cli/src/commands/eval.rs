use std::path::Path;

use omniflow::audio::read_wav_at;
use omniflow::dataforge::Manifest;
use omniflow::evalkit::{evaluate, load_folder, MelSummaryEmbedder, NamedClip};
use serde_json::{json, Value};

use crate::{CliError, RunConfig};

/// Targets of a manifest, named `<id>.wav` to match a folder of edited outputs.
fn manifest_targets(path: &Path, sample_rate: u32) -> Result<Vec<NamedClip>, CliError> {
    let m = Manifest::load(path)?;
    let root = path.parent().unwrap_or(Path::new("."));
    m.items
        .iter()
        .map(|it| Ok((format!("{}.wav", it.id), read_wav_at(&root.join(&it.target_path), sample_rate)?)))
        .collect()
}

/// LSD over same-named pairs plus fad-proxy and energy distance between the sets.
pub fn run(cfg: &RunConfig) -> Result<Value, CliError> {
    let sr = cfg.sample_rate;
    let candidate = load_folder(cfg.require(&cfg.paths.candidate, "candidate")?, sr)?;
    let reference = match (&cfg.paths.reference, &cfg.paths.manifest) {
        (Some(dir), None) => load_folder(dir, sr)?,
        (None, Some(m)) => manifest_targets(m, sr)?,
        _ => return Err(CliError::Config("eval needs exactly one of --reference and --manifest".into())),
    };
    let report = evaluate(&reference, &candidate, &cfg.mel, &MelSummaryEmbedder)?;
    let mut v = serde_json::to_value(&report)?;
    v["command"] = json!("eval");
    v["reference_clips"] = json!(reference.len());
    v["candidate_clips"] = json!(candidate.len());
    v["config"] = cfg.to_json();
    Ok(v)
}
