//! Scripted demonstrations, subsampling into step-multiplier records, and the dataset file.

pub mod dataset;
pub mod subsample;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{scripted_expert, ChainCraft, ComposedAction, EnvConfig, Head, Observation};
use crate::error::{Error, Result};

pub use dataset::{read_dataset, write_dataset, Dataset};
pub use subsample::{subsample, SubsampleConfig, SubsampleStats, SubsampledEpisode, SubsampledRecord, RULE_ORDER};

/// Attempts per requested episode before generation gives up.
pub const RETRY_BUDGET: usize = 20;

/// One frame of a demonstration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoFrame {
    pub observation: Observation,
    pub action: ComposedAction,
    /// Signed camera rotation of this frame in degrees.
    pub camera: i32,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoEpisode {
    pub seed: u64,
    pub frames: Vec<DemoFrame>,
    pub episode_return: f64,
}

impl DemoEpisode {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Splits every turn-only frame into `turn / granularity` frames of
    /// `granularity` degrees each, as a camera recorded at finer resolution would.
    pub fn with_fine_rotation(&self, granularity: i32) -> Result<DemoEpisode> {
        if granularity <= 0 || 30 % granularity != 0 {
            return Err(Error::config("fine rotation granularity must divide 30"));
        }
        let mut frames = Vec::with_capacity(self.frames.len());
        for f in &self.frames {
            let turn_only = f.action.active_heads() == [Head::Turn] && f.action.multiplier == 1;
            if turn_only && f.camera.abs() == 30 {
                let pieces = 30 / granularity;
                for k in 0..pieces {
                    frames.push(DemoFrame {
                        observation: f.observation.clone(),
                        action: f.action,
                        camera: granularity * f.camera.signum(),
                        reward: if k + 1 == pieces { f.reward } else { 0.0 },
                    });
                }
            } else {
                frames.push(f.clone());
            }
        }
        Ok(DemoEpisode {
            seed: self.seed,
            frames,
            episode_return: self.episode_return,
        })
    }
}

/// Plays one scripted episode; the expert's step multiplier is forced to 1.
pub fn record_episode(env: &ChainCraft, seed: u64, noise_level: f64, rng: &mut impl Rng) -> Result<DemoEpisode> {
    let (mut state, mut obs) = env.reset(seed)?;
    let mut frames = Vec::new();
    while !state.done {
        let action = scripted_expert(&state, noise_level, rng).with_multiplier(1);
        let out = env.step(&mut state, &action)?;
        frames.push(DemoFrame {
            observation: obs,
            action,
            camera: action.turn.degrees(),
            reward: out.reward,
        });
        obs = out.observation;
    }
    Ok(DemoEpisode {
        seed,
        frames,
        episode_return: state.episode_return,
    })
}

/// `n` demonstrations that each reach at least the first milestone.
pub fn generate_demos(n: usize, base_seed: u64, noise_level: f64, env_config: &EnvConfig) -> Result<Vec<DemoEpisode>> {
    if n == 0 {
        return Err(Error::usage("generate_demos: count must be at least 1"));
    }
    if !(0.0..=1.0).contains(&noise_level) {
        return Err(Error::config("noise level must lie in [0, 1]"));
    }
    let env = ChainCraft::new(env_config.clone())?;
    let mut master = ChaCha8Rng::seed_from_u64(base_seed);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut kept = None;
        for _ in 0..RETRY_BUDGET {
            let seed: u64 = master.gen();
            let mut rng = ChaCha8Rng::seed_from_u64(master.gen());
            let ep = record_episode(&env, seed, noise_level, &mut rng)?;
            if ep.frames.iter().any(|f| f.reward > 0.0) {
                kept = Some(ep);
                break;
            }
        }
        out.push(kept.ok_or_else(|| {
            Error::Generation(format!("episode {i}: no attempt reached the first milestone"))
        })?);
    }
    Ok(out)
}

/// Replays the recorded actions and checks the rewards.
pub fn verify_episode(env: &ChainCraft, episode: &DemoEpisode) -> Result<bool> {
    let (mut state, _) = env.reset(episode.seed)?;
    for f in &episode.frames {
        if state.done {
            return Ok(false);
        }
        let out = env.step(&mut state, &f.action)?;
        if out.reward != f.reward {
            return Ok(false);
        }
    }
    Ok(state.episode_return == episode.episode_return)
}
