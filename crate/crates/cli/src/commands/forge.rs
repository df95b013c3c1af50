use omniflow::dataforge::{forge, ClipLibrary, MANIFEST_FILE};
use serde_json::{json, Value};

use crate::{CliError, RunConfig};

/// Composes scenes from a clip folder (or the built-in synthetic library) into
/// `<out>/audio/*.wav` and `<out>/manifest.json`.
pub fn run(cfg: &RunConfig) -> Result<Value, CliError> {
    let out = cfg.require(&cfg.paths.out, "out")?;
    let library = match &cfg.paths.library {
        Some(dir) => ClipLibrary::from_folder(dir, cfg.sample_rate)?,
        None => ClipLibrary::synthetic(cfg.sample_rate, cfg.forge.scene.duration_s, cfg.forge.seed)?,
    };
    let (mut manifest, report) = forge(&library, &cfg.forge, out)?;
    // output locations stay out of the manifest so reruns elsewhere are byte-identical
    let mut echo = cfg.to_json();
    echo["paths"] = json!({ "library": cfg.paths.library });
    manifest.config = Some(echo);
    manifest.write(out)?;
    Ok(json!({
        "command": "forge",
        "manifest": out.join(MANIFEST_FILE),
        "items": manifest.items.len(),
        "splits": manifest.splits,
        "report": report,
        "library": {"events": library.n_events(), "backgrounds": library.n_backgrounds()},
        "config": cfg.to_json(),
    }))
}
