use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::DataforgeError;
use crate::audio::{read_wav_at, AudioBuffer};
use crate::rng::named_rng;

/// Sub-folder of a clip library whose files are used as backgrounds.
pub const BACKGROUND_DIR: &str = "background";
/// Background level of the bundled primitives (RMS).
const BACKGROUND_RMS: f64 = 0.05;
const SYNTHETIC_VARIANTS: usize = 2;

/// Labels of the bundled foreground primitives.
pub const SYNTHETIC_LABELS: [&str; 7] = [
    "high beep",
    "low hum",
    "rising chirp",
    "falling chirp",
    "two-tone siren",
    "noise burst",
    "click train",
];

/// Labels of the bundled backgrounds.
pub const SYNTHETIC_BACKGROUNDS: [&str; 3] = ["pink noise", "brown noise", "mains hum"];

#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub id: String,
    pub label: String,
    pub audio: AudioBuffer,
}

/// Labeled foreground clips and backgrounds, all at one sample rate. Clip ids are
/// `<label>/<name>`; iteration order is the id order.
#[derive(Debug, Clone)]
pub struct ClipLibrary {
    sample_rate: u32,
    events: BTreeMap<String, Clip>,
    backgrounds: BTreeMap<String, Clip>,
}

/// Rounds onto the 16-bit PCM grid (multiples of 2^-15), where sums of a few clips are
/// exact in f32 and survive a PCM16 round trip.
pub fn to_pcm_grid(x: f32) -> f32 {
    ((f64::from(x) * 32768.0).round().clamp(-32768.0, 32767.0) / 32768.0) as f32
}

fn grid_buffer(sr: u32, samples: impl IntoIterator<Item = f64>) -> Result<AudioBuffer, DataforgeError> {
    Ok(AudioBuffer::new(sr, samples.into_iter().map(|v| to_pcm_grid(v as f32)).collect())?)
}

/// 10 ms raised-cosine attack and release.
fn envelope(i: usize, len: usize, sr: f64) -> f64 {
    let ramp = ((0.01 * sr) as usize).max(1).min(len / 2).max(1);
    let edge = i.min(len - 1 - i);
    if edge >= ramp {
        1.0
    } else {
        0.5 - 0.5 * (PI * edge as f64 / ramp as f64).cos()
    }
}

fn synth_event<R: Rng + ?Sized>(label: &str, sr: u32, rng: &mut R) -> Result<AudioBuffer, DataforgeError> {
    let fs = f64::from(sr);
    let jitter: f64 = rng.random_range(0.9..1.1);
    let amp = 0.3;
    let (dur, samples): (f64, Box<dyn FnMut(usize, f64) -> f64>) = match label {
        "high beep" => (0.6, Box::new(move |_, t| (2.0 * PI * 1200.0 * jitter * t).sin())),
        "low hum" => (
            1.5,
            Box::new(move |_, t| {
                let f = 110.0 * jitter;
                (1..=4).map(|k| (2.0 * PI * f * k as f64 * t).sin() / k as f64).sum::<f64>() / 2.0
            }),
        ),
        "rising chirp" | "falling chirp" => {
            let (f0, f1) = if label == "rising chirp" { (400.0, 2400.0) } else { (2000.0, 300.0) };
            let d = 0.8;
            let k = (f1 - f0) * jitter / d;
            (d, Box::new(move |_, t| (2.0 * PI * (f0 * jitter * t + 0.5 * k * t * t)).sin()))
        }
        "two-tone siren" => (
            1.5,
            Box::new(move |_, t| {
                let f = if (t / 0.25) as usize % 2 == 0 { 700.0 } else { 950.0 };
                (2.0 * PI * f * jitter * t).sin()
            }),
        ),
        "noise burst" => {
            let mut noise = named_rng(rng.random(), "noise-burst");
            let (mut lp, mut prev) = (0.0, 0.0);
            (
                0.4,
                Box::new(move |_, t| {
                    let w: f64 = StandardNormal.sample(&mut noise);
                    // one-pole low-pass followed by a first difference: a crude band-pass
                    lp += 0.3 * (w - lp);
                    let y = lp - prev;
                    prev = lp;
                    3.0 * y * (-t / 0.12).exp()
                }),
            )
        }
        "click train" => {
            let rate = 10.0 * jitter;
            (
                1.0,
                Box::new(move |_, t| {
                    let phase = (t * rate).fract() / rate;
                    (2.0 * PI * 3000.0 * phase).sin() * (-phase / 0.003).exp()
                }),
            )
        }
        other => return Err(DataforgeError::UnknownClip(other.to_string())),
    };
    let mut samples = samples;
    let len = (dur * fs).round() as usize;
    grid_buffer(sr, (0..len).map(|i| amp * envelope(i, len, fs) * samples(i, i as f64 / fs)))
}

fn synth_background<R: Rng + ?Sized>(
    label: &str,
    sr: u32,
    len: usize,
    rng: &mut R,
) -> Result<AudioBuffer, DataforgeError> {
    let fs = f64::from(sr);
    let mut white = || -> f64 { StandardNormal.sample(&mut *rng) };
    let raw: Vec<f64> = match label {
        "pink noise" => {
            // Paul Kellet's economy pink filter
            let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
            (0..len)
                .map(|_| {
                    let w = white();
                    b0 = 0.99765 * b0 + w * 0.0990460;
                    b1 = 0.96300 * b1 + w * 0.2965164;
                    b2 = 0.57000 * b2 + w * 1.0526913;
                    b0 + b1 + b2 + w * 0.1848
                })
                .collect()
        }
        "brown noise" => {
            let mut acc = 0.0;
            (0..len)
                .map(|_| {
                    acc = 0.995 * acc + 0.1 * white();
                    acc
                })
                .collect()
        }
        "mains hum" => (0..len)
            .map(|i| {
                let t = i as f64 / fs;
                (2.0 * PI * 50.0 * t).sin() + 0.5 * (2.0 * PI * 150.0 * t).sin() + 0.3 * white()
            })
            .collect(),
        other => return Err(DataforgeError::UnknownClip(other.to_string())),
    };
    let rms = (raw.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64).sqrt();
    let gain = if rms > 0.0 { BACKGROUND_RMS / rms } else { 0.0 };
    grid_buffer(sr, raw.into_iter().map(|v| v * gain))
}

impl ClipLibrary {
    pub fn empty(sample_rate: u32) -> Self {
        Self {
            sample_rate,
            events: BTreeMap::new(),
            backgrounds: BTreeMap::new(),
        }
    }

    /// The bundled primitives: tones, chirps and noise bursts as events, plus noise and hum
    /// backgrounds of `background_s` seconds. Deterministic in `seed`.
    pub fn synthetic(sample_rate: u32, background_s: f64, seed: u64) -> Result<Self, DataforgeError> {
        if !(background_s > 0.0) {
            return Err(DataforgeError::InvalidConfig(format!("background length {background_s} s")));
        }
        let mut lib = Self::empty(sample_rate);
        for label in SYNTHETIC_LABELS {
            for v in 0..SYNTHETIC_VARIANTS {
                let mut rng = named_rng(seed, &format!("clip:{label}/{v}"));
                let audio = synth_event(label, sample_rate, &mut rng)?;
                lib.insert_event(label, &format!("synth{v}"), audio)?;
            }
        }
        let len = (background_s * f64::from(sample_rate)).round() as usize;
        for label in SYNTHETIC_BACKGROUNDS {
            let mut rng = named_rng(seed, &format!("background:{label}"));
            let audio = synth_background(label, sample_rate, len, &mut rng)?;
            lib.insert_background(label, "synth0", audio)?;
        }
        Ok(lib)
    }

    /// Loads `root/<label>/<clip>.wav`, resampled to `sample_rate`. Underscores in folder
    /// names become spaces in labels. Files under [`BACKGROUND_DIR`] are backgrounds.
    pub fn from_folder(root: &Path, sample_rate: u32) -> Result<Self, DataforgeError> {
        let mut lib = Self::empty(sample_rate);
        let mut dirs: Vec<_> = std::fs::read_dir(root)?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .collect();
        dirs.sort_by_key(|e| e.file_name());
        for dir in dirs {
            let folder = dir.file_name().to_string_lossy().into_owned();
            let mut files: Vec<_> = std::fs::read_dir(dir.path())?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
                .collect();
            files.sort();
            for path in files {
                let name = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                let raw = read_wav_at(&path, sample_rate)?;
                let audio = grid_buffer(sample_rate, raw.samples().iter().map(|&s| f64::from(s)))?;
                if folder == BACKGROUND_DIR {
                    lib.insert_background(BACKGROUND_DIR, &name, audio)?;
                } else {
                    lib.insert_event(&folder.replace('_', " "), &name, audio)?;
                }
            }
        }
        Ok(lib)
    }

    /// Adds every clip of `other`; ids already present are an error.
    pub fn merge(&mut self, other: ClipLibrary) -> Result<(), DataforgeError> {
        for c in other.events.into_values() {
            let (label, name) = split_id(&c.id);
            self.insert_event(label, name, c.audio)?;
        }
        for c in other.backgrounds.into_values() {
            let (label, name) = split_id(&c.id);
            self.insert_background(label, name, c.audio)?;
        }
        Ok(())
    }

    fn check(&self, id: &str, audio: &AudioBuffer) -> Result<(), DataforgeError> {
        if audio.sample_rate() != self.sample_rate {
            return Err(DataforgeError::InvalidConfig(format!(
                "clip {id} is at {} Hz, library at {} Hz",
                audio.sample_rate(),
                self.sample_rate
            )));
        }
        if audio.is_empty() {
            return Err(DataforgeError::InvalidConfig(format!("clip {id} is empty")));
        }
        if self.events.contains_key(id) || self.backgrounds.contains_key(id) {
            return Err(DataforgeError::DuplicateId(id.to_string()));
        }
        Ok(())
    }

    pub fn insert_event(&mut self, label: &str, name: &str, audio: AudioBuffer) -> Result<(), DataforgeError> {
        let id = format!("{label}/{name}");
        self.check(&id, &audio)?;
        let clip = Clip {
            id: id.clone(),
            label: label.to_string(),
            audio,
        };
        self.events.insert(id, clip);
        Ok(())
    }

    pub fn insert_background(&mut self, label: &str, name: &str, audio: AudioBuffer) -> Result<(), DataforgeError> {
        let id = format!("{label}/{name}");
        self.check(&id, &audio)?;
        let clip = Clip {
            id: id.clone(),
            label: label.to_string(),
            audio,
        };
        self.backgrounds.insert(id, clip);
        Ok(())
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn events(&self) -> impl Iterator<Item = &Clip> {
        self.events.values()
    }

    pub fn backgrounds(&self) -> impl Iterator<Item = &Clip> {
        self.backgrounds.values()
    }

    pub fn n_events(&self) -> usize {
        self.events.len()
    }

    pub fn n_backgrounds(&self) -> usize {
        self.backgrounds.len()
    }

    pub fn event(&self, id: &str) -> Result<&Clip, DataforgeError> {
        self.events.get(id).ok_or_else(|| DataforgeError::UnknownClip(id.to_string()))
    }

    pub fn background(&self, id: &str) -> Result<&Clip, DataforgeError> {
        self.backgrounds
            .get(id)
            .ok_or_else(|| DataforgeError::UnknownClip(id.to_string()))
    }

    pub(crate) fn event_at(&self, i: usize) -> &Clip {
        self.events.values().nth(i).expect("index below n_events")
    }

    pub(crate) fn background_at(&self, i: usize) -> &Clip {
        self.backgrounds.values().nth(i).expect("index below n_backgrounds")
    }
}

fn split_id(id: &str) -> (&str, &str) {
    id.rsplit_once('/').unwrap_or((id, ""))
}
