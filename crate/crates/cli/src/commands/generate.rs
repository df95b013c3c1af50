use std::path::Path;

use omniflow::audio::{read_wav_at, write_wav, AudioBuffer};
use omniflow::conditioning::{
    write_featseq, FeatureSeq, MmProvider, NullSyncProvider, ReplayMmProvider, ReplaySyncProvider, SyncProvider,
    ToyTokenProvider, SYNC_NATIVE_FPS,
};
use omniflow::flowdit::{sample, FlowModelState, LatentSeq};
use omniflow::spectral::{griffin_lim_with, mel_spectrogram, MelConfig};
use serde_json::{json, Value};

use super::train::load_run_config;
use crate::dataset::{edit_bundle, latent_rate};
use crate::{CliError, RunConfig};

struct Loaded {
    state: FlowModelState,
    /// Front end the checkpoint's codec statistics were fit with.
    mel: MelConfig,
    mm: Box<dyn MmProvider>,
    sync: Box<dyn SyncProvider>,
}

fn load(cfg: &RunConfig) -> Result<Loaded, CliError> {
    let ckpt = cfg.require(&cfg.paths.checkpoint, "checkpoint")?;
    let state = FlowModelState::load(ckpt)?;
    let trained = load_run_config(ckpt)?;
    let model = state.config().clone();
    let mm: Box<dyn MmProvider> = match &cfg.paths.mm_features {
        Some(p) => {
            let mut replay = ReplayMmProvider::new(model.mm_dim);
            replay.load(&cfg.sample.instruction, p)?;
            Box::new(replay)
        }
        None => Box::new(ToyTokenProvider::new(model.mm_dim, trained.conditioning.token_seed)),
    };
    let sync: Box<dyn SyncProvider> = match &cfg.paths.sync_features {
        Some(p) => {
            let replay = ReplaySyncProvider::from_file(p, SYNC_NATIVE_FPS)?;
            if replay.dim() != model.sync_dim {
                return Err(CliError::Config(format!(
                    "sync features have width {}, model expects {}",
                    replay.dim(),
                    model.sync_dim
                )));
            }
            Box::new(replay)
        }
        None => Box::new(NullSyncProvider { dim: model.sync_dim }),
    };
    Ok(Loaded {
        state,
        mel: trained.mel,
        mm,
        sync,
    })
}

/// Decodes a latent to a waveform of at least `min_len` samples (zero padded).
fn render(cfg: &RunConfig, l: &Loaded, latent: &LatentSeq, min_len: usize, out: &Path) -> Result<AudioBuffer, CliError> {
    if l.state.codec.stats.is_none() {
        return Err(CliError::Config("checkpoint has no codec statistics, so it cannot produce audio; use --latent-out".into()));
    }
    let mel = l.state.codec.decode(latent, l.mel)?;
    let mut audio = griffin_lim_with(&mel, &cfg.vocoder)?.audio;
    if audio.len() < min_len {
        let mut s = audio.into_samples();
        s.resize(min_len, 0.0);
        audio = AudioBuffer::new(l.mel.sample_rate, s)?;
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_wav(&audio, out, cfg.sample.wav_format)?;
    Ok(audio)
}

fn write_latent(latent: &LatentSeq, path: &Path) -> Result<(), CliError> {
    write_featseq(&FeatureSeq::from_tokens(latent.values().clone())?, path)?;
    Ok(())
}

/// Generates `sample.frames` latent frames for an instruction and writes the latent
/// and/or the vocoded waveform.
pub fn run_sample(cfg: &RunConfig) -> Result<Value, CliError> {
    if cfg.paths.out.is_none() && cfg.paths.latent_out.is_none() {
        return Err(CliError::Config("sample needs --out and/or --latent-out".into()));
    }
    let frames = cfg.sample.frames;
    if frames == 0 {
        return Err(CliError::Config("sample.frames must be positive".into()));
    }
    let l = load(cfg)?;
    let model = l.state.config().clone();
    let rate = latent_rate(&l.mel);
    let bundle = edit_bundle(&model, &*l.mm, &*l.sync, &cfg.sample.instruction, &cfg.sample.transcript, frames, rate, None)?;
    let latent = sample(&l.state, &bundle, frames, &cfg.sampler)?;
    if let Some(p) = &cfg.paths.latent_out {
        write_latent(&latent, p)?;
    }
    let samples = match &cfg.paths.out {
        Some(p) => Some(render(cfg, &l, &latent, 0, p)?.len()),
        None => None,
    };
    Ok(json!({
        "command": "sample",
        "frames": frames,
        "latent_dim": latent.dim(),
        "samples": samples,
        "out": cfg.paths.out,
        "latent_out": cfg.paths.latent_out,
        "config": cfg.to_json(),
    }))
}

/// Re-generates a source clip under an instruction, conditioned on the clip's own mel
/// frames. The output has the source's duration and mel frame count.
pub fn run_edit(cfg: &RunConfig) -> Result<Value, CliError> {
    let out = cfg.require(&cfg.paths.out, "out")?;
    let src_path = cfg.require(&cfg.paths.source, "source")?;
    let l = load(cfg)?;
    let model = l.state.config().clone();
    if l.state.codec.stats.is_none() || model.mel_dim != l.mel.n_mels {
        return Err(CliError::Config("edit needs a checkpoint trained on audio".into()));
    }
    let source = read_wav_at(src_path, l.mel.sample_rate)?;
    let src_mel = mel_spectrogram(&source, &l.mel)?;
    let frames = src_mel.n_frames();
    if frames == 0 {
        return Err(CliError::Data(format!("{} is shorter than one mel frame", src_path.display())));
    }
    let reference = l.state.codec.encode(&src_mel)?;
    let bundle = edit_bundle(
        &model,
        &*l.mm,
        &*l.sync,
        &cfg.sample.instruction,
        &cfg.sample.transcript,
        frames,
        latent_rate(&l.mel),
        Some(&reference),
    )?;
    let latent = sample(&l.state, &bundle, frames, &cfg.sampler)?;
    if let Some(p) = &cfg.paths.latent_out {
        write_latent(&latent, p)?;
    }
    let audio = render(cfg, &l, &latent, source.len(), out)?;
    let out_frames = mel_spectrogram(&audio, &l.mel)?.n_frames();
    Ok(json!({
        "command": "edit",
        "source": src_path,
        "out": out,
        "source_frames": frames,
        "output_frames": out_frames,
        "source_samples": source.len(),
        "output_samples": audio.len(),
        "config": cfg.to_json(),
    }))
}
