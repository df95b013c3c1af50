use std::path::{Path, PathBuf};

use omniflow::flowdit::toy::EightGaussians;
use omniflow::flowdit::{train, FlowError, FlowModelState, TrainConfig, TrainReport};
use serde_json::{json, Value};

use crate::config::Dataset;
use crate::dataset::EditDataset;
use crate::{CliError, RunConfig};

/// `model.ckpt` → `model.run.json`: the resolved config a checkpoint was trained with.
pub fn run_config_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("run.json")
}

/// Training config of a checkpoint written by `train`.
pub fn load_run_config(checkpoint: &Path) -> Result<RunConfig, CliError> {
    let p = run_config_path(checkpoint);
    let text = std::fs::read_to_string(&p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
}

pub fn run(cfg: &RunConfig) -> Result<Value, CliError> {
    let out = cfg.require(&cfg.paths.out, "out")?;
    let model = cfg.effective_model();
    model.validate()?;
    let mut state = FlowModelState::new(model.clone(), cfg.seed)?;
    let tc = TrainConfig {
        steps: cfg.train.steps,
        optimizer: cfg.optimizer,
        drop_prob: cfg.train.drop_prob,
        seed: cfg.train.seed,
        log_every: cfg.train.log_every,
    };
    let size = cfg.train.batch_size;
    let result: Result<TrainReport, FlowError> = match cfg.train.dataset {
        Dataset::Toy => {
            let toy = EightGaussians::new(cfg.conditioning.token_seed);
            train(&mut state, toy.batches(size, cfg.train.seed), &tc)
        }
        Dataset::Manifest => {
            let manifest = cfg.require(&cfg.paths.manifest, "manifest")?;
            let data = EditDataset::load(manifest, &cfg.mel, &model, cfg.conditioning.token_seed)?;
            state.codec = data.codec.clone();
            let mask = cfg.train.prompt_mask_prob;
            let batches = (0u64..).map(|i| {
                data.batch(size, mask, cfg.train.seed, i)
                    .map_err(|e| FlowError::State(e.to_string()))
            });
            train(&mut state, batches, &tc)
        }
    };
    let report = result?;

    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    state.save(out)?;
    let mut run_cfg = cfg.clone();
    run_cfg.model = model;
    std::fs::write(run_config_path(out), serde_json::to_string_pretty(&run_cfg)? + "\n")?;
    let csv = cfg.paths.loss_csv.clone().unwrap_or_else(|| out.with_extension("loss.csv"));
    std::fs::write(&csv, report.to_csv())?;

    let n = report.losses.len();
    Ok(json!({
        "command": "train",
        "checkpoint": out,
        "loss_csv": csv,
        "steps": n,
        "first_loss": report.losses.first().map(|l| l.1),
        "final_loss": report.losses.last().map(|l| l.1),
        "n_params": state.store.numel(),
        "config": run_cfg.to_json(),
    }))
}
