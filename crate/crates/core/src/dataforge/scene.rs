use std::ops::{Range, RangeInclusive};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::library::{to_pcm_grid, ClipLibrary};
use super::DataforgeError;
use crate::audio::{mix_at_snr, pitch_shift, time_stretch, AudioBuffer, AudioError};
use crate::rng::item_rng;

pub const SNR_RANGE_DB: RangeInclusive<f64> = 0.0..=3.0;
pub const PITCH_RANGE_SEMITONES: RangeInclusive<f64> = -3.0..=3.0;
pub const STRETCH_RANGE: RangeInclusive<f64> = 0.8..=1.2;
pub const DEFAULT_SCENE_DURATION_S: f64 = 10.0;
/// Composed scenes whose peak exceeds this are scaled down as a whole.
pub const PEAK_CEILING: f32 = 0.99;
const SCENE_STREAM: u64 = 0x5CE7E;

/// One foreground event. The SNR is measured after stretching and pitch shifting, against
/// the background alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub clip: String,
    pub label: String,
    pub onset_s: f64,
    pub snr_db: f64,
    pub pitch_semitones: f64,
    pub stretch: f64,
    pub seed: u64,
}

impl EventSpec {
    pub fn validate(&self) -> Result<(), DataforgeError> {
        let bad = |what: &str, v: f64| Err(DataforgeError::InvalidEvent(format!("{what} {v} out of range")));
        if !SNR_RANGE_DB.contains(&self.snr_db) {
            return bad("snr_db", self.snr_db);
        }
        if !PITCH_RANGE_SEMITONES.contains(&self.pitch_semitones) {
            return bad("pitch_semitones", self.pitch_semitones);
        }
        if !STRETCH_RANGE.contains(&self.stretch) {
            return bad("stretch", self.stretch);
        }
        if !(self.onset_s >= 0.0) || !self.onset_s.is_finite() {
            return bad("onset_s", self.onset_s);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub background: String,
    pub duration_s: f64,
    pub events: Vec<EventSpec>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub duration_s: f64,
    pub events_per_scene: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            duration_s: DEFAULT_SCENE_DURATION_S,
            events_per_scene: 1,
        }
    }
}

/// A composed scene. Every buffer lies on the 16-bit PCM grid and
/// `mixture == background + stems[0] + stems[1] + …` holds exactly in f32.
#[derive(Debug, Clone, PartialEq)]
pub struct Soundscape {
    pub mixture: AudioBuffer,
    pub background: AudioBuffer,
    /// Per-event stems on the scene timeline, zero outside their span.
    pub stems: Vec<AudioBuffer>,
    pub spans: Vec<Range<usize>>,
}

fn sum_into(acc: &mut [f32], x: &AudioBuffer) {
    for (a, &s) in acc.iter_mut().zip(x.samples()) {
        *a += s;
    }
}

impl Soundscape {
    /// `background + Σ stems` skipping event `skip`, in stem order.
    pub fn mixture_without(&self, skip: usize) -> AudioBuffer {
        let mut acc = self.background.samples().to_vec();
        for (i, s) in self.stems.iter().enumerate() {
            if i != skip {
                sum_into(&mut acc, s);
            }
        }
        AudioBuffer::new(self.background.sample_rate(), acc).expect("sum of finite buffers")
    }

    /// Event `i` restricted to its own span.
    pub fn event_audio(&self, i: usize) -> AudioBuffer {
        let span = self.spans[i].clone();
        AudioBuffer::new(self.background.sample_rate(), self.stems[i].samples()[span].to_vec())
            .expect("slice of a valid buffer")
    }
}

pub fn scene_samples(duration_s: f64, sample_rate: u32) -> usize {
    (duration_s * f64::from(sample_rate)).round() as usize
}

/// `round(len * stretch)`, the length of a stretched clip.
pub fn stretched_len(len: usize, stretch: f64) -> usize {
    (len as f64 * stretch).round() as usize
}

/// Draws a clip that fits the scene at any stretch, then SNR, pitch, stretch and an onset
/// that keeps the stretched clip in the scene.
pub fn draw_event<R: Rng + ?Sized>(
    library: &ClipLibrary,
    duration_s: f64,
    rng: &mut R,
) -> Result<EventSpec, DataforgeError> {
    if library.n_events() == 0 {
        return Err(DataforgeError::EmptyLibrary("foreground events"));
    }
    let sr = library.sample_rate();
    let n = scene_samples(duration_s, sr);
    // only clips that fit at the longest stretch are eligible
    let fits: Vec<usize> = (0..library.n_events())
        .filter(|&i| stretched_len(library.event_at(i).audio.len(), *STRETCH_RANGE.end()) <= n)
        .collect();
    if fits.is_empty() {
        let shortest = (0..library.n_events()).map(|i| library.event_at(i)).min_by_key(|c| c.audio.len()).expect("non-empty");
        return Err(DataforgeError::Overrun {
            clip: shortest.id.clone(),
            samples: stretched_len(shortest.audio.len(), *STRETCH_RANGE.end()),
            scene: n,
        });
    }
    let clip = library.event_at(fits[rng.random_range(0..fits.len())]);
    let snr_db = rng.random_range(SNR_RANGE_DB);
    let pitch_semitones = rng.random_range(PITCH_RANGE_SEMITONES);
    let stretch = rng.random_range(STRETCH_RANGE);
    let len = stretched_len(clip.audio.len(), stretch);
    let onset = rng.random_range(0..=n - len);
    Ok(EventSpec {
        clip: clip.id.clone(),
        label: clip.label.clone(),
        onset_s: onset as f64 / f64::from(sr),
        snr_db,
        pitch_semitones,
        stretch,
        seed: rng.random(),
    })
}

/// Scene `index` under `seed`: a uniform background and `events_per_scene` events.
pub fn draw_scene(
    library: &ClipLibrary,
    seed: u64,
    index: u64,
    cfg: &SceneConfig,
) -> Result<SceneSpec, DataforgeError> {
    if library.n_backgrounds() == 0 {
        return Err(DataforgeError::EmptyLibrary("backgrounds"));
    }
    let mut rng = item_rng(seed, SCENE_STREAM, index);
    let background = library
        .background_at(rng.random_range(0..library.n_backgrounds()))
        .id
        .clone();
    let events = (0..cfg.events_per_scene)
        .map(|_| draw_event(library, cfg.duration_s, &mut rng))
        .collect::<Result<_, _>>()?;
    Ok(SceneSpec {
        background,
        duration_s: cfg.duration_s,
        events,
        seed: rng.random(),
    })
}

/// Stretches, pitch shifts, then places each event at its SNR and onset. Identity
/// parameters (stretch 1, pitch 0) skip the vocoder. If the scene would peak above
/// [`PEAK_CEILING`], background and stems are scaled by one common gain.
pub fn compose_soundscape(scene: &SceneSpec, library: &ClipLibrary) -> Result<Soundscape, DataforgeError> {
    let sr = library.sample_rate();
    let n = scene_samples(scene.duration_s, sr);
    let bg_clip = library.background(&scene.background)?;
    if bg_clip.audio.len() < n {
        return Err(DataforgeError::InvalidConfig(format!(
            "background {} has {} samples, scene needs {n}",
            bg_clip.id,
            bg_clip.audio.len()
        )));
    }
    let background = AudioBuffer::new(sr, bg_clip.audio.samples()[..n].to_vec())?;

    let mut stems = Vec::with_capacity(scene.events.len());
    let mut spans = Vec::with_capacity(scene.events.len());
    for ev in &scene.events {
        ev.validate()?;
        let clip = library.event(&ev.clip)?;
        let mut audio = clip.audio.clone();
        if ev.stretch != 1.0 {
            audio = time_stretch(&audio, ev.stretch)?;
        }
        if ev.pitch_semitones != 0.0 {
            audio = pitch_shift(&audio, ev.pitch_semitones)?;
        }
        let mix = mix_at_snr(&audio, &background, ev.snr_db, ev.onset_s).map_err(|e| match e {
            AudioError::Overrun { fg_len, bg_len, .. } => DataforgeError::Overrun {
                clip: ev.clip.clone(),
                samples: fg_len,
                scene: bg_len,
            },
            AudioError::SilentBackground => DataforgeError::SilentBackground(scene.background.clone()),
            other => other.into(),
        })?;
        spans.push(mix.onset..mix.onset + audio.len());
        stems.push(mix.stem);
    }

    let mut peak = 0.0f32;
    for i in 0..n {
        let v = background.samples()[i] + stems.iter().map(|s| s.samples()[i]).sum::<f32>();
        peak = peak.max(v.abs());
    }
    let gain = if peak > PEAK_CEILING {
        log::debug!("scene {}: scaling by {} to avoid clipping", scene.seed, PEAK_CEILING / peak);
        PEAK_CEILING / peak
    } else {
        1.0
    };
    let quantize = |b: &AudioBuffer| {
        AudioBuffer::new(sr, b.samples().iter().map(|&s| to_pcm_grid(s * gain)).collect())
    };
    let background = quantize(&background)?;
    let stems = stems.iter().map(quantize).collect::<Result<Vec<_>, _>>()?;
    let mut mixture = background.samples().to_vec();
    for s in &stems {
        sum_into(&mut mixture, s);
    }
    Ok(Soundscape {
        mixture: AudioBuffer::new(sr, mixture)?,
        background,
        stems,
        spans,
    })
}
