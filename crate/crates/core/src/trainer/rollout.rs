use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{FeatureBatch, Network, RecurrentState};
use crate::env::{ChainCraft, ComposedAction, EnvConfig, Observation, WorldState, MILESTONE_COUNT, STEP_MULTIPLIERS};
use crate::error::Result;
use crate::replay::TrajectorySegment;

/// Read-only copy of the learner's networks handed to actors.
#[derive(Debug, Clone)]
pub struct PolicySnapshot {
    pub version: u64,
    pub actor: Network,
    /// `None` when the actor network carries its own value head.
    pub critic: Option<Network>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub actor_id: usize,
    pub episode_id: u64,
    pub episode_return: f64,
    pub frames: u32,
    pub obtained: [bool; MILESTONE_COUNT],
}

struct Running {
    state: WorldState,
    obs: Observation,
    actor_state: RecurrentState,
    critic_state: RecurrentState,
    episode_id: u64,
}

/// One environment instance rolling out the current snapshot.
pub struct ActorWorker {
    pub id: usize,
    env: ChainCraft,
    rng: ChaCha8Rng,
    running: Option<Running>,
    episodes: u64,
    pub finished: Vec<EpisodeSummary>,
}

/// Largest number of frames a single segment can consume.
pub fn max_segment_frames(length: usize) -> u64 {
    length as u64 * *STEP_MULTIPLIERS.last().expect("non-empty") as u64
}

impl ActorWorker {
    pub fn new(id: usize, env_config: &EnvConfig, seed: u64) -> Result<Self> {
        Ok(Self {
            id,
            env: ChainCraft::new(env_config.clone())?,
            rng: ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(id as u64)),
            running: None,
            episodes: 0,
            finished: Vec::new(),
        })
    }

    /// Rolls out up to `length` steps; returns the segment and the frames consumed.
    pub fn collect(&mut self, snapshot: &PolicySnapshot, length: usize) -> Result<(TrajectorySegment, u64)> {
        let value_net = snapshot.critic.as_ref().unwrap_or(&snapshot.actor);
        let mut run = match self.running.take() {
            Some(r) => r,
            None => {
                let seed: u64 = self.rng.gen();
                let (state, obs) = self.env.reset(seed)?;
                self.episodes += 1;
                Running {
                    state,
                    obs,
                    actor_state: snapshot.actor.initial_state(1),
                    critic_state: value_net.initial_state(1),
                    episode_id: ((self.id as u64) << 40) | self.episodes,
                }
            }
        };
        let shared = snapshot.critic.is_none();
        let mut seg = TrajectorySegment {
            observations: Vec::with_capacity(length + 1),
            actions: Vec::with_capacity(length),
            rewards: Vec::with_capacity(length),
            dones: Vec::with_capacity(length),
            valid: Vec::with_capacity(length),
            behavior_log_probs: Vec::with_capacity(length),
            behavior_values: Vec::with_capacity(length),
            actor_state: run.actor_state.clone(),
            critic_state: if shared { run.actor_state.clone() } else { run.critic_state.clone() },
            episode_id: run.episode_id,
            actor_id: self.id,
            policy_version: snapshot.version,
        };
        let mut frames = 0u64;
        let mut done = false;
        for _ in 0..length {
            if done {
                seg.observations.push(run.obs.clone());
                seg.actions.push(ComposedAction::noop().to_indices());
                seg.rewards.push(0.0);
                seg.dones.push(false);
                seg.valid.push(false);
                let last = seg.behavior_log_probs.last().cloned().unwrap_or_default();
                seg.behavior_log_probs.push(last);
                seg.behavior_values.push(0.0);
                continue;
            }
            let feats = FeatureBatch::single(&run.obs);
            let out = snapshot.actor.step(&feats, &run.actor_state)?;
            let value = if shared {
                out.value.unwrap_or(0.0)
            } else {
                let c = value_net.step(&feats, &run.critic_state)?;
                run.critic_state = c.state;
                c.value.unwrap_or(0.0)
            };
            run.actor_state = out.state;
            let dist = out.dist.expect("actor network has policy heads");
            let idx = dist.sample_indices(&mut self.rng);
            let action = ComposedAction::from_indices(&idx)?;
            let step = self.env.step(&mut run.state, &action)?;
            frames += step.frames as u64;
            seg.observations.push(std::mem::replace(&mut run.obs, step.observation));
            seg.actions.push(action.to_indices());
            seg.rewards.push(step.reward);
            seg.dones.push(step.done);
            seg.valid.push(true);
            seg.behavior_log_probs.push(out.log_probs.expect("actor network has policy heads"));
            seg.behavior_values.push(value);
            done = step.done;
        }
        seg.observations.push(run.obs.clone());
        if done {
            self.finished.push(EpisodeSummary {
                actor_id: self.id,
                episode_id: run.episode_id,
                episode_return: run.state.episode_return,
                frames: run.state.frame,
                obtained: run.state.obtained,
            });
        } else {
            self.running = Some(run);
        }
        Ok((seg, frames))
    }

    pub fn drain_finished(&mut self) -> Vec<EpisodeSummary> {
        std::mem::take(&mut self.finished)
    }
}
