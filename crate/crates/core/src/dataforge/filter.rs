use serde::{Deserialize, Serialize};

use super::triplet::ForgedTriplet;
use crate::audio::{vad_activity_ratio, AudioBuffer, DEFAULT_VAD_FRAME_MS, DEFAULT_VAD_THRESHOLD_DB};

pub const DEFAULT_MIN_ACTIVITY: f64 = 0.3;

/// One stage of the candidate filter. `check` returns the rejection reason, if any.
pub trait Filter: Send + Sync {
    fn name(&self) -> &str;
    fn check(&self, candidate: &ForgedTriplet) -> Option<String>;
}

/// Rejects candidates whose event is active in fewer than `min_activity` of its frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VadFilter {
    pub min_activity: f64,
    pub frame_ms: f64,
    pub level_db: f64,
}

impl Default for VadFilter {
    fn default() -> Self {
        Self {
            min_activity: DEFAULT_MIN_ACTIVITY,
            frame_ms: DEFAULT_VAD_FRAME_MS,
            level_db: DEFAULT_VAD_THRESHOLD_DB,
        }
    }
}

impl Filter for VadFilter {
    fn name(&self) -> &str {
        "vad"
    }

    fn check(&self, c: &ForgedTriplet) -> Option<String> {
        match vad_activity_ratio(&c.event_audio, self.frame_ms, self.level_db) {
            Ok(r) if r >= self.min_activity => None,
            Ok(r) => Some(format!("activity {r:.3} < {}", self.min_activity)),
            Err(e) => Some(e.to_string()),
        }
    }
}

/// Scores how well an instruction matches the edited event.
pub trait SemanticScorer: Send + Sync {
    fn name(&self) -> &str;
    fn score(&self, instruction: &str, event: &AudioBuffer) -> f64;
}

/// Scores every pair 1.0.
#[derive(Debug, Clone, Copy, Default)]
pub struct PassAllScorer;

impl SemanticScorer for PassAllScorer {
    fn name(&self) -> &str {
        "pass-all"
    }

    fn score(&self, instruction: &str, _event: &AudioBuffer) -> f64 {
        log::debug!("pass-all scorer accepted {instruction:?}");
        1.0
    }
}

pub struct SemanticFilter {
    pub scorer: Box<dyn SemanticScorer>,
    pub threshold: f64,
}

impl Default for SemanticFilter {
    fn default() -> Self {
        Self {
            scorer: Box::new(PassAllScorer),
            threshold: 0.5,
        }
    }
}

impl Filter for SemanticFilter {
    fn name(&self) -> &str {
        "semantic"
    }

    fn check(&self, c: &ForgedTriplet) -> Option<String> {
        let s = self.scorer.score(&c.triplet.instruction, &c.event_audio);
        (s < self.threshold).then(|| format!("{} score {s:.3} < {}", self.scorer.name(), self.threshold))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCount {
    pub stage: String,
    pub seen: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub id: String,
    pub stage: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input: usize,
    pub kept: usize,
    pub stages: Vec<StageCount>,
    pub rejections: Vec<Rejection>,
}

impl FilterReport {
    /// Kept over input; 1 for empty input.
    pub fn retention(&self) -> f64 {
        if self.input == 0 {
            1.0
        } else {
            self.kept as f64 / self.input as f64
        }
    }

    /// Adds another report's counts stage by stage.
    pub fn absorb(&mut self, other: FilterReport) {
        self.input += other.input;
        self.kept += other.kept;
        for s in other.stages {
            match self.stages.iter_mut().find(|x| x.stage == s.stage) {
                Some(x) => {
                    x.seen += s.seen;
                    x.rejected += s.rejected;
                }
                None => self.stages.push(s),
            }
        }
        self.rejections.extend(other.rejections);
    }
}

/// Runs candidates through the stages in order; the first rejecting stage wins.
pub fn filter_pipeline<I>(candidates: I, stages: &[Box<dyn Filter>]) -> (Vec<ForgedTriplet>, FilterReport)
where
    I: IntoIterator<Item = ForgedTriplet>,
{
    let mut report = FilterReport {
        stages: stages
            .iter()
            .map(|s| StageCount {
                stage: s.name().to_string(),
                seen: 0,
                rejected: 0,
            })
            .collect(),
        ..FilterReport::default()
    };
    let mut kept = Vec::new();
    'items: for c in candidates {
        report.input += 1;
        for (stage, count) in stages.iter().zip(report.stages.iter_mut()) {
            count.seen += 1;
            if let Some(reason) = stage.check(&c) {
                count.rejected += 1;
                log::debug!("rejected {} at {}: {reason}", c.triplet.id, stage.name());
                report.rejections.push(Rejection {
                    id: c.triplet.id.clone(),
                    stage: stage.name().to_string(),
                    reason,
                });
                continue 'items;
            }
        }
        kept.push(c);
    }
    report.kept = kept.len();
    (kept, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataforge::library::ClipLibrary;
    use crate::dataforge::scene::{draw_scene, SceneConfig};
    use crate::dataforge::triplet::{make_triplet, Task};

    fn candidates(n: u64) -> Vec<ForgedTriplet> {
        let lib = ClipLibrary::synthetic(8_000, 2.0, 0).unwrap();
        let cfg = SceneConfig {
            duration_s: 2.0,
            events_per_scene: 1,
        };
        (0..n)
            .map(|k| {
                let scene = draw_scene(&lib, 1, k, &cfg).unwrap();
                make_triplet(Task::Remove, &scene, 0, &lib, &format!("c{k}")).unwrap()
            })
            .collect()
    }

    struct Fixed(f64);

    impl SemanticScorer for Fixed {
        fn name(&self) -> &str {
            "fixed"
        }
        fn score(&self, _: &str, _: &AudioBuffer) -> f64 {
            self.0
        }
    }

    #[test]
    fn silent_event_rejected_at_vad() {
        let mut c = candidates(1).remove(0);
        c.event_audio = AudioBuffer::silence(8_000, 4_000);
        let stages: Vec<Box<dyn Filter>> = vec![Box::new(VadFilter::default()), Box::new(SemanticFilter::default())];
        let (kept, report) = filter_pipeline(vec![c], &stages);
        assert!(kept.is_empty());
        assert_eq!(report.stages[0].rejected, 1);
        assert_eq!(report.stages[1].seen, 0);
        assert_eq!(report.rejections[0].stage, "vad");
    }

    #[test]
    fn pass_all_matches_vad_retention() {
        let mut cs = candidates(6);
        for c in cs.iter_mut().step_by(2) {
            c.event_audio = c.event_audio.scaled(1e-4);
        }
        let vad_only: Vec<Box<dyn Filter>> = vec![Box::new(VadFilter::default())];
        let both: Vec<Box<dyn Filter>> = vec![Box::new(VadFilter::default()), Box::new(SemanticFilter::default())];
        let (_, a) = filter_pipeline(cs.clone(), &vad_only);
        let (kept, b) = filter_pipeline(cs.clone(), &both);
        assert_eq!(a.kept, 3);
        assert_eq!(a.retention(), b.retention());
        assert_eq!(kept.iter().map(|c| c.triplet.id.as_str()).collect::<Vec<_>>(), ["c1", "c3", "c5"]);

        let zero: Vec<Box<dyn Filter>> = vec![
            Box::new(VadFilter {
                min_activity: 0.0,
                ..VadFilter::default()
            }),
            Box::new(SemanticFilter {
                scorer: Box::new(Fixed(0.0)),
                threshold: 0.0,
            }),
        ];
        assert_eq!(filter_pipeline(cs.clone(), &zero).1.kept, 6);
        let strict: Vec<Box<dyn Filter>> = vec![Box::new(SemanticFilter {
            scorer: Box::new(Fixed(0.2)),
            threshold: 0.5,
        })];
        assert_eq!(filter_pipeline(cs, &strict).1.retention(), 0.0);
        let (none, r) = filter_pipeline(Vec::new(), &both);
        assert!(none.is_empty());
        assert_eq!(r.input, 0);
    }
}
