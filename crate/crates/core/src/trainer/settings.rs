use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::KlDirection;

/// Which of the fine-tuning components are switched on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    /// Experience replay.
    pub er: bool,
    /// Separate actor and critic networks (shared trunk when off).
    pub sac: bool,
    /// Clip negative advantages in the policy gradient.
    pub ac: bool,
    /// Policy- and value-cloning on replayed samples.
    pub cl: bool,
    /// Replay samples per online sample.
    pub replay_ratio: usize,
    /// Environment frames, counting step-multiplier repetitions.
    pub budget_frames: u64,
    /// Leading fraction of the budget during which only the value function learns.
    pub warmup_fraction: f64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            er: true,
            sac: true,
            ac: true,
            cl: true,
            replay_ratio: 15,
            budget_frames: 200_000,
            warmup_fraction: 0.0625,
        }
    }
}

impl AblationConfig {
    pub fn impala() -> Self {
        Self {
            er: false,
            sac: false,
            ac: false,
            cl: false,
            ..Default::default()
        }
    }

    pub fn with(mut self, er: bool, sac: bool, ac: bool, cl: bool) -> Self {
        self.er = er;
        self.sac = sac;
        self.ac = ac;
        self.cl = cl;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget_frames == 0 {
            return Err(Error::config("ablation.budget_frames must be positive"));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::config("ablation.warmup_fraction must lie in [0, 1)"));
        }
        if self.er && self.replay_ratio == 0 {
            return Err(Error::config("ablation.replay_ratio must be at least 1 when er = true"));
        }
        Ok(())
    }

    /// Cloning needs replayed samples: CL without ER is switched off, with a warning.
    pub fn coerced(&self) -> (AblationConfig, Option<String>) {
        if self.cl && !self.er {
            let mut c = self.clone();
            c.cl = false;
            (
                c,
                Some("ablation.cl = true requires ablation.er = true; disabling cloning losses".into()),
            )
        } else {
            (self.clone(), None)
        }
    }

    pub fn warmup_frames(&self) -> u64 {
        (self.budget_frames as f64 * self.warmup_fraction).round() as u64
    }

    /// Table-style row label, e.g. `+ER +SAC +AC`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        for (on, name) in [(self.er, "+ER"), (self.sac, "+SAC"), (self.ac, "+AC"), (self.cl, "+CL")] {
            if on {
                parts.push(name);
            }
        }
        if parts.is_empty() {
            "IMPALA".into()
        } else {
            parts.join(" ")
        }
    }
}

/// Learner and actor settings shared by every ablation row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub actors: usize,
    /// Steps per trajectory segment.
    pub segment_length: usize,
    /// Segments per learner batch (online plus replay).
    pub batch_segments: usize,
    pub learning_rate: f64,
    pub max_grad_norm: f64,
    pub gamma: f64,
    pub rho_bar: f64,
    pub c_bar: f64,
    /// Multiplies rewards seen by the learner.
    pub reward_scale: f64,
    pub replay_capacity: usize,
    pub kl_direction: KlDirection,
    /// Run actors on their own threads (otherwise round-robin on the learner thread).
    pub threaded: bool,
    pub queue_capacity: usize,
    /// Start the critic's encoder and LSTM from the pretrained actor.
    pub critic_from_actor: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            actors: 5,
            segment_length: 64,
            batch_segments: 64,
            learning_rate: 1e-4,
            max_grad_norm: 40.0,
            gamma: 0.99,
            rho_bar: 1.0,
            c_bar: 1.0,
            reward_scale: 1.0,
            replay_capacity: 4096,
            kl_direction: KlDirection::ReplayToCurrent,
            threaded: false,
            queue_capacity: 16,
            critic_from_actor: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.actors == 0 {
            return Err(Error::config("train.actors must be at least 1"));
        }
        if self.segment_length == 0 || self.batch_segments == 0 {
            return Err(Error::config("train.segment_length and train.batch_segments must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("train.learning_rate must be a non-negative number"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config("train.gamma must lie in [0, 1]"));
        }
        if !(self.c_bar > 0.0 && self.rho_bar >= self.c_bar) {
            return Err(Error::config("train.rho_bar >= train.c_bar > 0 is required"));
        }
        if self.replay_capacity == 0 || self.queue_capacity == 0 {
            return Err(Error::config("train.replay_capacity and train.queue_capacity must be positive"));
        }
        if !(self.max_grad_norm > 0.0) {
            return Err(Error::config("train.max_grad_norm must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    pub seed_base: u64,
    /// Sample actions instead of taking each head's argmax.
    pub sampled: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 100,
            seed_base: 1_000_000,
            sampled: false,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::config("eval.episodes must be at least 1"));
        }
        Ok(())
    }
}
