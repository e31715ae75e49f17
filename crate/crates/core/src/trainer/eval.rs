use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{FeatureBatch, Network, RecurrentState};
use crate::env::{scripted_expert, ChainCraft, ComposedAction, EnvConfig, Observation, WorldState, MILESTONE_COUNT};
use crate::error::{Error, Result};

/// Anything that picks actions episode by episode.
pub trait Policy {
    fn reset(&mut self);
    fn act(&mut self, state: &WorldState, obs: &Observation, rng: &mut ChaCha8Rng) -> Result<ComposedAction>;
}

pub struct NetworkPolicy<'a> {
    net: &'a Network,
    state: RecurrentState,
    sampled: bool,
}

impl<'a> NetworkPolicy<'a> {
    pub fn new(net: &'a Network, sampled: bool) -> Result<Self> {
        if !net.role().has_policy() {
            return Err(Error::usage("cannot act with a network that has no policy heads"));
        }
        Ok(Self {
            net,
            state: net.initial_state(1),
            sampled,
        })
    }
}

impl Policy for NetworkPolicy<'_> {
    fn reset(&mut self) {
        self.state = self.net.initial_state(1);
    }

    fn act(&mut self, _state: &WorldState, obs: &Observation, rng: &mut ChaCha8Rng) -> Result<ComposedAction> {
        let out = self.net.step(&FeatureBatch::single(obs), &self.state)?;
        self.state = out.state;
        let dist = out.dist.expect("policy heads checked at construction");
        if self.sampled {
            dist.sample(rng)
        } else {
            dist.mode()
        }
    }
}

pub struct ExpertPolicy {
    pub noise_level: f64,
}

impl Policy for ExpertPolicy {
    fn reset(&mut self) {}

    fn act(&mut self, state: &WorldState, _obs: &Observation, rng: &mut ChaCha8Rng) -> Result<ComposedAction> {
        Ok(scripted_expert(state, self.noise_level, rng))
    }
}

pub struct RandomPolicy;

impl Policy for RandomPolicy {
    fn reset(&mut self) {}

    fn act(&mut self, _state: &WorldState, _obs: &Observation, rng: &mut ChaCha8Rng) -> Result<ComposedAction> {
        Ok(ComposedAction::random(rng))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    /// Fraction of episodes that obtained each milestone.
    pub reward_frequency: Vec<f64>,
    pub returns: Vec<f64>,
}

/// Sample mean and standard deviation (`n − 1` denominator; 0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs `n` episodes on seeds `seed_base..seed_base + n`.
pub fn evaluate(policy: &mut dyn Policy, env_config: &EnvConfig, n: usize, seed_base: u64) -> Result<EvalReport> {
    if n == 0 {
        return Err(Error::usage("evaluate: at least one episode is required"));
    }
    let env = ChainCraft::new(env_config.clone())?;
    let mut returns = Vec::with_capacity(n);
    let mut counts = [0usize; MILESTONE_COUNT];
    for i in 0..n {
        let seed = seed_base.wrapping_add(i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xe7a1);
        let (mut state, mut obs) = env.reset(seed)?;
        policy.reset();
        while !state.done {
            let action = policy.act(&state, &obs, &mut rng)?;
            obs = env.step(&mut state, &action)?.observation;
        }
        returns.push(state.episode_return);
        for (k, got) in state.obtained.iter().enumerate() {
            counts[k] += *got as usize;
        }
    }
    let (mean, std) = mean_std(&returns);
    Ok(EvalReport {
        episodes: n,
        mean,
        std,
        max: returns.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        reward_frequency: counts.iter().map(|c| *c as f64 / n as f64).collect(),
        returns,
    })
}

pub fn evaluate_network(net: &Network, env_config: &EnvConfig, n: usize, seed_base: u64, sampled: bool) -> Result<EvalReport> {
    let mut policy = NetworkPolicy::new(net, sampled)?;
    evaluate(&mut policy, env_config, n, seed_base)
}
