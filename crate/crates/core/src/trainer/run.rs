use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::learner::{Learner, UpdateStats};
use super::rollout::{max_segment_frames, ActorWorker, EpisodeSummary, PolicySnapshot};
use super::settings::{AblationConfig, TrainConfig};
use crate::agent::{ArchConfig, Network, Role};
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::losses::{LossWeights, Source};
use crate::nn::ParameterSet;
use crate::replay::{compose_batch, ReplayBuffer, TrajectorySegment};

/// One row of the metrics stream, written after every learner update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub frame: u64,
    pub update: u64,
    pub warmup: bool,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub policy_cloning: f64,
    pub value_cloning: f64,
    pub total: f64,
    pub mean_rho: f64,
    pub buffer: usize,
    pub return_ema: f64,
}

impl MetricsRow {
    pub const HEADER: &'static str =
        "frame,update,warmup,policy,value,entropy,policy_cloning,value_cloning,total,mean_rho,buffer,return_ema";

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{:.8},{:.8},{:.8},{:.8},{:.8},{:.8},{:.6},{},{:.6}",
            self.frame,
            self.update,
            self.warmup as u8,
            self.policy,
            self.value,
            self.entropy,
            self.policy_cloning,
            self.value_cloning,
            self.total,
            self.mean_rho,
            self.buffer,
            self.return_ema
        )
    }
}

pub struct RunOutput {
    pub learner: Learner,
    pub metrics: Vec<MetricsRow>,
    pub episodes: Vec<EpisodeSummary>,
    pub frames: u64,
}

/// Copies parameters that exist in both networks (same name after the role prefix, same shape).
pub fn transplant(src: &Network, dst: &mut Network) -> usize {
    let from = format!("{}/", src.scope());
    let to = format!("{}/", dst.scope());
    let mut copied = 0;
    for (name, p) in src.params().iter() {
        let Some(rest) = name.strip_prefix(&from) else { continue };
        let target = format!("{to}{rest}");
        if let Ok(v) = dst.params_mut().value_mut(&target) {
            if v.shape() == p.value.shape() {
                *v = p.value.clone();
                copied += 1;
            }
        }
    }
    copied
}

/// Learner initialized from pretrained actor parameters, laid out per the ablation flags.
pub fn build_learner(
    pretrained: &ParameterSet,
    arch: &ArchConfig,
    view_radius: usize,
    ablation: &AblationConfig,
    train: &TrainConfig,
    weights: &LossWeights,
) -> Result<Learner> {
    let (ablation, warning) = ablation.coerced();
    if let Some(w) = warning {
        log::warn!("{w}");
    }
    ablation.validate()?;
    train.validate()?;
    let actor = Network::from_params(Role::Actor, arch, view_radius, pretrained.clone())?;
    if ablation.sac {
        let mut critic = Network::new(Role::Critic, arch, view_radius, train.seed ^ 0xc0ffee)?;
        if train.critic_from_actor {
            transplant(&actor, &mut critic);
        }
        Learner::new(actor, Some(critic), ablation, train.clone(), *weights)
    } else {
        let mut shared = Network::new(Role::Shared, arch, view_radius, train.seed ^ 0xc0ffee)?;
        transplant(&actor, &mut shared);
        Learner::new(shared, None, ablation, train.clone(), *weights)
    }
}

fn snapshot_of(learner: &Learner, version: u64) -> Arc<PolicySnapshot> {
    Arc::new(PolicySnapshot {
        version,
        actor: learner.actor.clone(),
        critic: learner.critic.clone(),
    })
}

/// Online segments waiting for the next update, plus everything the learner loop tracks.
struct LearnerLoop {
    learner: Learner,
    replay: Option<ReplayBuffer>,
    rng: ChaCha8Rng,
    online_per_batch: usize,
    warmup_frames: u64,
    pending: Vec<Arc<TrajectorySegment>>,
    frames: u64,
    metrics: Vec<MetricsRow>,
    episodes: Vec<EpisodeSummary>,
    return_ema: Option<f64>,
}

impl LearnerLoop {
    fn new(learner: Learner) -> Result<Self> {
        let ab = learner.ablation.clone();
        let tr = learner.train.clone();
        let replay = if ab.er { Some(ReplayBuffer::new(tr.replay_capacity)?) } else { None };
        let online_per_batch = if ab.er {
            (tr.batch_segments / (ab.replay_ratio + 1)).max(1)
        } else {
            tr.batch_segments
        };
        Ok(Self {
            replay,
            rng: ChaCha8Rng::seed_from_u64(tr.seed ^ 0x1ea4),
            online_per_batch,
            warmup_frames: ab.warmup_frames(),
            pending: Vec::with_capacity(online_per_batch),
            frames: 0,
            metrics: Vec::new(),
            episodes: Vec::new(),
            return_ema: None,
            learner,
        })
    }

    fn record_episodes(&mut self, finished: Vec<EpisodeSummary>) {
        for e in finished {
            self.return_ema = Some(match self.return_ema {
                Some(m) => 0.95 * m + 0.05 * e.episode_return,
                None => e.episode_return,
            });
            self.episodes.push(e);
        }
    }

    /// Adds a segment; runs an update when a batch is complete. Returns true if it updated.
    fn push(&mut self, seg: TrajectorySegment, frames: u64) -> Result<bool> {
        self.frames += frames;
        self.pending.push(Arc::new(seg));
        if self.pending.len() >= self.online_per_batch {
            self.update()?;
            return Ok(true);
        }
        Ok(false)
    }

    fn update(&mut self) -> Result<Option<UpdateStats>> {
        if self.pending.is_empty() {
            return Ok(None);
        }
        let online = std::mem::take(&mut self.pending);
        let batch: Vec<(Arc<TrajectorySegment>, Source)> = match &self.replay {
            Some(buf) => compose_batch(online.clone(), self.learner.ablation.replay_ratio, buf, &mut self.rng),
            None => online.iter().map(|s| (Arc::clone(s), Source::Online)).collect(),
        };
        let warmup = self.frames <= self.warmup_frames;
        let stats = self.learner.update(&batch, warmup)?;
        drop(batch);
        if let Some(buf) = &self.replay {
            for s in online {
                buf.push(Arc::try_unwrap(s).unwrap_or_else(|a| (*a).clone()))?;
            }
        }
        let c = stats.components;
        self.metrics.push(MetricsRow {
            frame: self.frames,
            update: self.learner.updates,
            warmup,
            policy: c.policy,
            value: c.value,
            entropy: c.entropy,
            policy_cloning: c.policy_cloning,
            value_cloning: c.value_cloning,
            total: stats.total,
            mean_rho: stats.mean_rho,
            buffer: self.replay.as_ref().map_or(0, ReplayBuffer::len),
            return_ema: self.return_ema.unwrap_or(0.0),
        });
        Ok(Some(stats))
    }

    fn finish(mut self) -> Result<RunOutput> {
        self.update()?;
        Ok(RunOutput {
            learner: self.learner,
            metrics: self.metrics,
            episodes: self.episodes,
            frames: self.frames,
        })
    }
}

/// Runs actors and learner until the frame budget is spent.
pub fn train(learner: Learner, env_config: &EnvConfig) -> Result<RunOutput> {
    if learner.train.threaded {
        train_threaded(learner, env_config)
    } else {
        train_sync(learner, env_config)
    }
}

/// Actors take turns on the calling thread; fully deterministic for a given seed.
pub fn train_sync(learner: Learner, env_config: &EnvConfig) -> Result<RunOutput> {
    let tr = learner.train.clone();
    let budget = learner.ablation.budget_frames;
    let per_segment = max_segment_frames(tr.segment_length);
    let mut workers = (0..tr.actors)
        .map(|i| ActorWorker::new(i, env_config, tr.seed))
        .collect::<Result<Vec<_>>>()?;
    let mut lp = LearnerLoop::new(learner)?;
    let mut snapshot = snapshot_of(&lp.learner, 0);
    let mut next = 0;
    while lp.frames + per_segment <= budget {
        let (seg, frames) = workers[next].collect(&snapshot, tr.segment_length)?;
        let finished = workers[next].drain_finished();
        lp.record_episodes(finished);
        next = (next + 1) % workers.len();
        if lp.push(seg, frames)? {
            snapshot = snapshot_of(&lp.learner, lp.learner.updates);
        }
    }
    lp.finish()
}

type ActorMessage = Result<(TrajectorySegment, u64, Vec<EpisodeSummary>)>;

/// One thread per actor feeding a bounded queue; the learner publishes a new snapshot after every update.
pub fn train_threaded(learner: Learner, env_config: &EnvConfig) -> Result<RunOutput> {
    let tr = learner.train.clone();
    let budget = learner.ablation.budget_frames;
    let per_segment = max_segment_frames(tr.segment_length);
    let reserved = AtomicU64::new(0);
    let published = RwLock::new(snapshot_of(&learner, 0));
    let (tx, rx) = crossbeam_channel::bounded::<ActorMessage>(tr.queue_capacity);
    let mut lp = LearnerLoop::new(learner)?;
    let mut failure: Option<Error> = None;

    std::thread::scope(|scope| {
        for id in 0..tr.actors {
            let tx = tx.clone();
            let reserved = &reserved;
            let published = &published;
            let env_config = env_config.clone();
            let tr = tr.clone();
            scope.spawn(move || {
                let mut worker = match ActorWorker::new(id, &env_config, tr.seed) {
                    Ok(w) => w,
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        return;
                    }
                };
                loop {
                    let ok = reserved
                        .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |r| {
                            (r + per_segment <= budget).then_some(r + per_segment)
                        })
                        .is_ok();
                    if !ok {
                        break;
                    }
                    let snap = Arc::clone(&published.read().unwrap_or_else(|e| e.into_inner()));
                    let msg = worker.collect(&snap, tr.segment_length).map(|(seg, frames)| {
                        reserved.fetch_sub(per_segment - frames, Ordering::SeqCst);
                        (seg, frames, worker.drain_finished())
                    });
                    let failed = msg.is_err();
                    if tx.send(msg).is_err() || failed {
                        break;
                    }
                }
            });
        }
        drop(tx);
        for msg in rx.iter() {
            let step = msg.and_then(|(seg, frames, finished)| {
                lp.record_episodes(finished);
                lp.push(seg, frames)
            });
            match step {
                Ok(true) => {
                    let snap = snapshot_of(&lp.learner, lp.learner.updates);
                    *published.write().unwrap_or_else(|e| e.into_inner()) = snap;
                }
                Ok(false) => {}
                Err(e) => {
                    failure = Some(e);
                    // stop every actor: no reservation can succeed any more
                    reserved.store(u64::MAX / 2, Ordering::SeqCst);
                    break;
                }
            }
        }
        // unblock actors waiting on a full queue
        drop(rx);
    });
    if let Some(e) = failure {
        return Err(e);
    }
    lp.finish()
}
