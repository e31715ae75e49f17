//! Ring-buffer experience replay of fixed-length trajectory segments.

use std::sync::{Arc, Mutex};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::RecurrentState;
use crate::env::{Observation, HEAD_COUNT};
use crate::error::{Error, Result};
use crate::losses::Source;

/// `L` steps of experience plus the observation that follows them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySegment {
    /// `L + 1` observations; the last one is only used for bootstrapping.
    pub observations: Vec<Observation>,
    pub actions: Vec<[usize; HEAD_COUNT]>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// `false` for padding after the episode ended.
    pub valid: Vec<bool>,
    /// Behavior log-probabilities, `[step][head][class]`.
    pub behavior_log_probs: Vec<Vec<Vec<f64>>>,
    pub behavior_values: Vec<f64>,
    pub actor_state: RecurrentState,
    pub critic_state: RecurrentState,
    pub episode_id: u64,
    pub actor_id: usize,
    pub policy_version: u64,
}

impl TrajectorySegment {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn valid_steps(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.actions.len();
        if l == 0 {
            return Err(Error::usage("segment has no steps"));
        }
        if self.observations.len() != l + 1 {
            return Err(Error::usage("segment needs one more observation than steps"));
        }
        if self.rewards.len() != l
            || self.dones.len() != l
            || self.valid.len() != l
            || self.behavior_log_probs.len() != l
            || self.behavior_values.len() != l
        {
            return Err(Error::usage("segment sequences have inconsistent lengths"));
        }
        if self.behavior_log_probs.iter().any(|h| h.len() != HEAD_COUNT) {
            return Err(Error::usage("segment behavior distribution has the wrong head count"));
        }
        // once done, everything after must be padding
        if let Some(end) = self.dones.iter().position(|d| *d) {
            if self.valid[end + 1..].iter().any(|v| *v) || !self.valid[..=end].iter().all(|v| *v) {
                return Err(Error::usage("segment steps after a done flag must be padding"));
            }
        }
        if self.actor_state.batch != 1 || self.critic_state.batch != 1 {
            return Err(Error::usage("segment recurrent states must hold a single row"));
        }
        Ok(())
    }
}

#[derive(Debug)]
struct Ring {
    slots: Vec<Arc<TrajectorySegment>>,
    cursor: usize,
    total: u64,
}

/// Fixed-capacity FIFO ring; safe for many writers and one reader.
#[derive(Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    ring: Mutex<Ring>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("replay.capacity must be positive"));
        }
        Ok(Self {
            capacity,
            ring: Mutex::new(Ring {
                slots: Vec::with_capacity(capacity.min(1 << 16)),
                cursor: 0,
                total: 0,
            }),
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Ring> {
        // a panicking writer cannot leave a half-inserted segment behind
        self.ring.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.lock().slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total_written(&self) -> u64 {
        self.lock().total
    }

    pub fn push(&self, segment: TrajectorySegment) -> Result<()> {
        segment.validate()?;
        let seg = Arc::new(segment);
        let mut ring = self.lock();
        if ring.slots.len() < self.capacity {
            ring.slots.push(seg);
        } else {
            let at = ring.cursor;
            ring.slots[at] = seg;
        }
        ring.cursor = (ring.cursor + 1) % self.capacity;
        ring.total += 1;
        Ok(())
    }

    /// `n` uniform draws with replacement.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<Arc<TrajectorySegment>>> {
        if n == 0 {
            return Ok(Vec::new());
        }
        let ring = self.lock();
        if ring.slots.is_empty() {
            return Err(Error::Unavailable("replay buffer is empty".into()));
        }
        Ok((0..n)
            .map(|_| Arc::clone(&ring.slots[rng.gen_range(0..ring.slots.len())]))
            .collect())
    }

    /// Contents from oldest to newest.
    pub fn snapshot(&self) -> Vec<Arc<TrajectorySegment>> {
        let ring = self.lock();
        if ring.slots.len() < self.capacity {
            ring.slots.clone()
        } else {
            let mut out = ring.slots[ring.cursor..].to_vec();
            out.extend_from_slice(&ring.slots[..ring.cursor]);
            out
        }
    }
}

/// Online segments followed by `ratio × |online|` replay draws, each tagged by source.
pub fn compose_batch(
    online: Vec<Arc<TrajectorySegment>>,
    ratio: usize,
    buffer: &ReplayBuffer,
    rng: &mut impl Rng,
) -> Vec<(Arc<TrajectorySegment>, Source)> {
    let wanted = ratio * online.len();
    let mut batch: Vec<_> = online.into_iter().map(|s| (s, Source::Online)).collect();
    match buffer.sample(wanted, rng) {
        Ok(replayed) => batch.extend(replayed.into_iter().map(|s| (s, Source::Replay))),
        Err(_) => log::warn!("replay buffer empty; using an online-only batch"),
    }
    batch
}
