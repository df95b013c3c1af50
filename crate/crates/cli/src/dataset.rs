//! Training examples from a forged manifest: the target clip is the latent to generate,
//! the source clip is the frame-aligned mel stream and the instruction is the context.

use std::path::Path;

use omniflow::audio::read_wav_at;
use omniflow::conditioning::{
    build_low_stream, mask_prompt, ConditioningBundle, FrameFeatures, MmProvider, NullSyncProvider, SourceFlags,
    SyncProvider, ToyTokenProvider,
};
use omniflow::dataforge::Manifest;
use omniflow::flowdit::{CodecStats, Example, LatentCodec, LatentSeq, ModelConfig};
use omniflow::rng::item_rng;
use omniflow::spectral::{mel_spectrogram, MelConfig, MelSpectrogram};
use rand::Rng;

use crate::CliError;

const BATCH_STREAM: u64 = 0x6d61_6e69;

/// Latent frames per second.
pub fn latent_rate(mel: &MelConfig) -> f64 {
    f64::from(mel.sample_rate) / mel.hop as f64
}

/// Conditioning for one clip: instruction tokens as context, `[null sync | reference]` as
/// the frame-aligned stream. `reference` is the encoded source, or `None` for no audio
/// prompt.
pub fn edit_bundle(
    model: &ModelConfig,
    mm: &dyn MmProvider,
    sync: &dyn SyncProvider,
    instruction: &str,
    transcript: &str,
    frames: usize,
    rate: f64,
    reference: Option<&LatentSeq>,
) -> Result<ConditioningBundle, CliError> {
    let mel = match reference {
        Some(r) => FrameFeatures::from_frames(r.values().clone())?,
        None => FrameFeatures::null(frames, model.mel_dim),
    };
    if mel.n_frames() != frames || mel.dim() != model.mel_dim {
        return Err(CliError::Config(format!(
            "reference stream is {}x{}, model expects {frames}x{}",
            mel.n_frames(),
            mel.dim(),
            model.mel_dim
        )));
    }
    let sync = sync.provide(frames, rate)?;
    let mm_feats = mm.provide(instruction)?;
    Ok(ConditioningBundle {
        flags: SourceFlags {
            mm: !mm_feats.is_empty(),
            transcript: !transcript.is_empty(),
            sync: sync.valid().iter().any(|&v| v),
            mel: reference.is_some(),
        },
        mm: mm_feats,
        transcript: transcript.to_string(),
        low: build_low_stream(&sync, &mel)?,
    })
}

/// Source and target mels of every manifest item, computed in parallel.
fn load_mels(manifest: &Manifest, root: &Path, mel: &MelConfig) -> Result<Vec<(MelSpectrogram, MelSpectrogram)>, CliError> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let items = &manifest.items;
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(items.len().div_ceil(workers).max(1))
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|it| {
                            let src = read_wav_at(&root.join(&it.source_path), mel.sample_rate)?;
                            let tgt = read_wav_at(&root.join(&it.target_path), mel.sample_rate)?;
                            Ok((mel_spectrogram(&src, mel)?, mel_spectrogram(&tgt, mel)?))
                        })
                        .collect::<Result<Vec<_>, CliError>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("loader panicked"))
            .collect::<Result<Vec<Vec<_>>, _>>()
            .map(|v| v.into_iter().flatten().collect())
    })
}

/// Encoded editing examples of a manifest with the codec fit to all of its clips.
#[derive(Debug, Clone)]
pub struct EditDataset {
    pub examples: Vec<Example>,
    pub codec: LatentCodec,
    pub sync_dim: usize,
}

impl EditDataset {
    pub fn load(path: &Path, mel: &MelConfig, model: &ModelConfig, token_seed: u64) -> Result<Self, CliError> {
        let manifest = Manifest::load(path)?;
        if manifest.items.is_empty() {
            return Err(CliError::Data(format!("manifest {} has no items", path.display())));
        }
        let root = path.parent().unwrap_or(Path::new("."));
        let mels = load_mels(&manifest, root, mel)?;
        let frames = mels[0].1.n_frames();
        for (it, (s, t)) in manifest.items.iter().zip(&mels) {
            if s.n_frames() != frames || t.n_frames() != frames {
                return Err(CliError::Data(format!(
                    "item {} has {} / {} frames, expected {frames} for both",
                    it.id,
                    s.n_frames(),
                    t.n_frames()
                )));
            }
        }
        if frames == 0 {
            return Err(CliError::Data("clips are shorter than one mel frame".into()));
        }
        let codec = LatentCodec::with_stats(CodecStats::fit(mels.iter().flat_map(|(s, t)| [s, t]))?);
        let mm = ToyTokenProvider::new(model.mm_dim, token_seed);
        let sync = NullSyncProvider { dim: model.sync_dim };
        let rate = latent_rate(mel);
        let examples = manifest
            .items
            .iter()
            .zip(&mels)
            .map(|(it, (s, t))| {
                let reference = codec.encode(s)?;
                Ok(Example {
                    x0: codec.encode(t)?,
                    bundle: edit_bundle(model, &mm, &sync, &it.instruction, "", frames, rate, Some(&reference))?,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        Ok(Self {
            examples,
            codec,
            sync_dim: model.sync_dim,
        })
    }

    /// Batch `i`: `size` items drawn with replacement, each with its reference mel span
    /// masked with probability `mask_prob`. Depends only on `(seed, i)`.
    pub fn batch(&self, size: usize, mask_prob: f64, seed: u64, i: u64) -> Result<Vec<Example>, CliError> {
        let mut rng = item_rng(seed, BATCH_STREAM, i);
        (0..size)
            .map(|_| {
                let mut ex = self.examples[rng.random_range(0..self.examples.len())].clone();
                if mask_prob > 0.0 && rng.random_bool(mask_prob) {
                    let (sync, mel) = ex.bundle.low.split_channels(self.sync_dim);
                    let valid = ex.bundle.low.valid().to_vec();
                    let (masked, _) = mask_prompt(&FrameFeatures::new(mel, valid.clone())?, &mut rng, None)?;
                    let sync = FrameFeatures::new(sync, vec![false; valid.len()])?;
                    ex.bundle.low = build_low_stream(&sync, &masked)?;
                }
                Ok(ex)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use omniflow::dataforge::{forge, ClipLibrary, ForgeConfig, SceneConfig};

    fn small_mel() -> MelConfig {
        MelConfig {
            n_fft: 256,
            hop: 64,
            n_mels: 8,
            ..MelConfig::at_rate(8_000)
        }
    }

    #[test]
    fn manifest_examples_line_up() {
        let dir = tempfile::tempdir().unwrap();
        let lib = ClipLibrary::synthetic(8_000, 1.0, 0).unwrap();
        let cfg = ForgeConfig {
            scene: SceneConfig {
                duration_s: 1.0,
                events_per_scene: 1,
            },
            per_task: 2,
            ..ForgeConfig::default()
        };
        forge(&lib, &cfg, dir.path()).unwrap();
        let mel = small_mel();
        let model = ModelConfig {
            latent_dim: 8,
            mel_dim: 8,
            sync_dim: 2,
            mm_dim: 4,
            ..ModelConfig::default()
        };
        let ds = EditDataset::load(&dir.path().join("manifest.json"), &mel, &model, 0).unwrap();
        assert_eq!(ds.examples.len(), 6);
        let frames = mel.n_frames(8_000);
        for ex in &ds.examples {
            assert_eq!(ex.x0.shape(), (frames, 8));
            assert_eq!(ex.bundle.low.n_frames(), frames);
            assert_eq!(ex.bundle.low.dim(), 10);
            assert!(ex.bundle.flags.mel && ex.bundle.flags.mm && !ex.bundle.flags.sync);
        }
        let a = ds.batch(5, 1.0, 3, 0).unwrap();
        assert_eq!(a, ds.batch(5, 1.0, 3, 0).unwrap());
        for ex in &a {
            let masked = ex.bundle.low.valid().iter().filter(|v| !**v).count();
            assert!(masked as f64 >= 0.2 * frames as f64 - 1.0, "{masked}");
            let (sync, _) = ex.bundle.low.split_channels(2);
            assert!(sync.iter().all(|&v| v == 0.0));
        }
    }
}
