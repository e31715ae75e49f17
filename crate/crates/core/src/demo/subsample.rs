use serde::{Deserialize, Serialize};

use super::DemoFrame;
use crate::env::{ComposedAction, Head, Observation, Turn, STEP_MULTIPLIERS};
use crate::error::{Error, Result};

/// Order in which the rules run over a demonstration.
pub const RULE_ORDER: [&str; 4] = ["no_op", "excluded", "camera_accumulation", "repeat_collapse"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubsampleConfig {
    /// Heads whose actions are dropped without compensation.
    pub excluded_heads: Vec<Head>,
    /// Accumulated rotation (degrees) that produces one turn record.
    pub camera_threshold: i32,
    /// Maximum number of records kept.
    pub truncation: usize,
}

impl Default for SubsampleConfig {
    fn default() -> Self {
        Self {
            excluded_heads: Vec::new(),
            camera_threshold: 30,
            truncation: 2000,
        }
    }
}

impl SubsampleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.camera_threshold <= 0 {
            return Err(Error::config("subsample.camera_threshold must be positive"));
        }
        if self.truncation == 0 {
            return Err(Error::config("subsample.truncation must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsampleStats {
    pub noop_dropped: u64,
    pub excluded_dropped: u64,
    pub camera_dropped: u64,
    pub truncated_frames: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampledRecord {
    pub observation: Observation,
    pub action: ComposedAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampledEpisode {
    pub source: u64,
    pub original_length: u64,
    pub records: Vec<SubsampledRecord>,
    pub stats: SubsampleStats,
}

impl SubsampledEpisode {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn frames_covered(&self) -> u64 {
        self.records.iter().map(|r| r.action.multiplier as u64).sum()
    }

    /// Records viewed as frames again, for re-applying the rules.
    pub fn as_frames(&self) -> Vec<DemoFrame> {
        self.records
            .iter()
            .map(|r| DemoFrame {
                observation: r.observation.clone(),
                action: r.action,
                camera: r.action.turn.degrees(),
                reward: 0.0,
            })
            .collect()
    }
}

/// Greedy decomposition of a run length into the multiplier vocabulary.
pub fn quantize_run(mut n: u32) -> Vec<u32> {
    let mut out = Vec::new();
    while n > 0 {
        let m = *STEP_MULTIPLIERS.iter().rev().find(|m| **m <= n).expect("1 is in the vocabulary");
        out.push(m);
        n -= m;
    }
    out
}

fn is_turn_only(a: &ComposedAction, camera: i32) -> bool {
    a.multiplier == 1 && camera != 0 && a.active_heads().iter().all(|h| *h == Head::Turn)
}

#[derive(Default)]
struct Accumulator {
    degrees: i32,
    frames: u64,
    first: Option<Observation>,
}

/// Applies the no-op, exclusion, camera-accumulation and repeat-collapse rules, then truncates.
///
/// Records carrying a multiplier above 1 are treated as atomic: they pass
/// through unchanged and are never merged.
pub fn subsample(frames: &[DemoFrame], source: u64, config: &SubsampleConfig) -> SubsampledEpisode {
    let mut stats = SubsampleStats::default();
    let mut stage: Vec<SubsampledRecord> = Vec::new();
    let mut acc = Accumulator::default();
    let threshold = config.camera_threshold.max(1);

    let flush = |acc: &mut Accumulator, stats: &mut SubsampleStats| {
        stats.camera_dropped += acc.frames;
        *acc = Accumulator::default();
    };

    for f in frames {
        let mut action = f.action;
        let mut camera = f.camera;
        let active = action.active_heads();
        if !active.is_empty() && active.iter().all(|h| config.excluded_heads.contains(h)) {
            flush(&mut acc, &mut stats);
            stats.excluded_dropped += action.multiplier as u64;
            continue;
        }
        for h in &config.excluded_heads {
            action.clear_head(*h);
            if *h == Head::Turn {
                camera = 0;
            }
        }
        if action.is_noop() && camera == 0 {
            flush(&mut acc, &mut stats);
            stats.noop_dropped += action.multiplier as u64;
            continue;
        }
        if is_turn_only(&action, camera) {
            if acc.degrees != 0 && acc.degrees.signum() != camera.signum() {
                flush(&mut acc, &mut stats);
            }
            if acc.first.is_none() {
                acc.first = Some(f.observation.clone());
            }
            acc.degrees += camera;
            acc.frames += 1;
            if acc.degrees.abs() >= threshold {
                let turn = if acc.degrees > 0 { Turn::Right } else { Turn::Left };
                stage.push(SubsampledRecord {
                    observation: acc.first.take().expect("set above"),
                    action: ComposedAction::turning(turn),
                });
                // the emitting frame is kept, the rest were absorbed
                stats.camera_dropped += acc.frames - 1;
                acc = Accumulator::default();
            }
            continue;
        }
        flush(&mut acc, &mut stats);
        stage.push(SubsampledRecord {
            observation: f.observation.clone(),
            action,
        });
    }
    flush(&mut acc, &mut stats);

    let mut records: Vec<SubsampledRecord> = Vec::with_capacity(stage.len());
    let mut i = 0;
    while i < stage.len() {
        if stage[i].action.multiplier != 1 {
            records.push(stage[i].clone());
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < stage.len() && stage[j].action == stage[i].action {
            j += 1;
        }
        let mut at = i;
        for m in quantize_run((j - i) as u32) {
            records.push(SubsampledRecord {
                observation: stage[at].observation.clone(),
                action: stage[i].action.with_multiplier(m),
            });
            at += m as usize;
        }
        i = j;
    }

    if records.len() > config.truncation {
        stats.truncated_frames = records[config.truncation..]
            .iter()
            .map(|r| r.action.multiplier as u64)
            .sum();
        records.truncate(config.truncation);
    }
    // the policy sees its own previous (compressed) action
    let mut prev = ComposedAction::noop();
    for r in &mut records {
        r.observation.prev_action = prev;
        prev = r.action;
    }
    SubsampledEpisode {
        source,
        original_length: frames.iter().map(|f| f.action.multiplier as u64).sum(),
        records,
        stats,
    }
}
