//! Supervised pretraining of the actor on subsampled demonstrations.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{ArchConfig, FeatureBatch, Network, RecurrentState, Role};
use crate::demo::{Dataset, SubsampledEpisode};
use crate::env::{HEAD_COUNT, HEAD_SIZES};
use crate::error::{Error, Result};
use crate::losses::graph::action_log_prob;
use crate::nn::{Optimizer, OptimizerConfig, OptimizerKind, Tape, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Truncated-BPTT window in records.
    pub bptt_window: usize,
    pub holdout_fraction: f64,
    pub head_weights: Vec<f64>,
    pub max_grad_norm: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 125,
            learning_rate: 0.001,
            batch_size: 16,
            bptt_window: 64,
            holdout_fraction: 0.1,
            head_weights: vec![1.0; HEAD_COUNT],
            max_grad_norm: 40.0,
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("pretrain.epochs must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("pretrain.learning_rate must be a non-negative number"));
        }
        if self.batch_size == 0 || self.bptt_window == 0 {
            return Err(Error::config("pretrain.batch_size and pretrain.bptt_window must be positive"));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::config("pretrain.holdout_fraction must lie in [0, 1)"));
        }
        if self.head_weights.len() != HEAD_COUNT {
            return Err(Error::config(format!(
                "pretrain.head_weights needs {HEAD_COUNT} entries, got {}",
                self.head_weights.len()
            )));
        }
        Ok(())
    }
}

/// Time-major window over a batch of episodes, with actions and a padding mask.
#[derive(Debug, Clone)]
pub struct SupervisedBatch {
    pub features: FeatureBatch,
    /// Per row, one class index per head.
    pub actions: Vec<Vec<usize>>,
    pub mask: Vec<bool>,
}

impl SupervisedBatch {
    /// Records `start..start + len` of every episode; short episodes are padded.
    pub fn window(episodes: &[&SubsampledEpisode], start: usize, len: usize) -> Result<Self> {
        if episodes.is_empty() || len == 0 {
            return Err(Error::usage("supervised batch is empty"));
        }
        let mut rows_obs = Vec::with_capacity(len);
        let mut actions = Vec::with_capacity(len * episodes.len());
        let mut mask = Vec::with_capacity(len * episodes.len());
        for t in start..start + len {
            let mut row = Vec::with_capacity(episodes.len());
            for e in episodes {
                let rec = e.records.get(t).or_else(|| e.records.last()).ok_or_else(|| {
                    Error::usage("supervised batch contains an episode without records")
                })?;
                row.push(&rec.observation);
                actions.push(rec.action.to_indices().to_vec());
                mask.push(t < e.records.len());
            }
            rows_obs.push(row);
        }
        Ok(Self {
            features: FeatureBatch::from_sequences(&rows_obs),
            actions,
            mask,
        })
    }
}

/// Head-weighted cross-entropy averaged over valid rows, recorded on `tape`.
pub fn supervised_loss(
    actor: &Network,
    tape: &mut Tape,
    batch: &SupervisedBatch,
    state: &RecurrentState,
    head_weights: &[f64],
) -> Result<(Var, Var, Var, Vec<Var>)> {
    let valid = batch.mask.iter().filter(|m| **m).count();
    if valid == 0 {
        return Err(Error::usage("supervised batch has no valid steps"));
    }
    let out = actor.forward(tape, &batch.features, state)?;
    let mut total: Option<Var> = None;
    for (h, lp) in out.log_probs.iter().enumerate() {
        let idx: Vec<Vec<usize>> = batch.actions.iter().map(|a| vec![a[h]]).collect();
        let picked = action_log_prob(tape, std::slice::from_ref(lp), &idx)?;
        let coef: Vec<f64> = batch
            .mask
            .iter()
            .map(|m| if *m { -head_weights[h] / valid as f64 } else { 0.0 })
            .collect();
        let term = tape.weighted_sum(picked, coef)?;
        total = Some(match total {
            Some(t) => tape.add(t, term)?,
            None => term,
        });
    }
    let loss = total.ok_or_else(|| Error::usage("actor has no policy heads"))?;
    Ok((loss, out.final_h, out.final_c, out.log_probs))
}

/// One gradient step; returns the loss before the step and the carried recurrent state.
pub fn supervised_update(
    actor: &mut Network,
    optimizer: &mut Optimizer,
    batch: &SupervisedBatch,
    state: &RecurrentState,
    head_weights: &[f64],
    max_grad_norm: f64,
) -> Result<(f64, RecurrentState)> {
    let mut tape = Tape::new();
    let (loss, h, c, _) = supervised_loss(actor, &mut tape, batch, state, head_weights)?;
    let grads = tape.backward(loss)?;
    let scope = actor.scope();
    let params = actor.params_mut();
    params.zero_grad();
    tape.accumulate_into(&grads, scope, params)?;
    params.clip_grad_norm(max_grad_norm);
    optimizer.step(params);
    let next = RecurrentState {
        batch: state.batch,
        hidden: state.hidden,
        h: tape.value(h).to_vec(),
        c: tape.value(c).to_vec(),
    };
    Ok((tape.scalar(loss), next))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    /// Greedy per-head accuracy on the held-out episodes (empty without a held-out split).
    pub heldout_accuracy: Vec<f64>,
}

impl EpochStats {
    pub fn csv_header() -> String {
        let heads: Vec<String> = crate::env::HEADS.iter().map(|h| format!("acc_{}", h.name())).collect();
        format!("epoch,loss,{}", heads.join(","))
    }

    pub fn csv_row(&self) -> String {
        let acc: Vec<String> = if self.heldout_accuracy.is_empty() {
            vec![String::new(); HEAD_COUNT]
        } else {
            self.heldout_accuracy.iter().map(|a| format!("{a:.6}")).collect()
        };
        format!("{},{:.8},{}", self.epoch, self.loss, acc.join(","))
    }
}

/// Splits episode indices into (train, held-out).
pub fn split_holdout(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
    let held = if n >= 2 { ((n as f64 * fraction).round() as usize).min(n - 1) } else { 0 };
    let heldout = idx.split_off(n - held);
    (idx, heldout)
}

/// Greedy per-head prediction accuracy over whole episodes.
pub fn heldout_accuracy(actor: &Network, episodes: &[&SubsampledEpisode]) -> Result<Vec<f64>> {
    let mut hits = [0usize; HEAD_COUNT];
    let mut total = 0usize;
    for e in episodes {
        if e.records.is_empty() {
            continue;
        }
        let batch = SupervisedBatch::window(std::slice::from_ref(e), 0, e.records.len())?;
        let (dists, _) = actor.actor_forward(&batch.features, &actor.initial_state(1))?;
        for (d, a) in dists.iter().zip(&batch.actions) {
            for (h, (m, t)) in d.mode_indices().iter().zip(a).enumerate() {
                hits[h] += (m == t) as usize;
            }
            total += 1;
        }
    }
    if total == 0 {
        return Ok(Vec::new());
    }
    Ok(hits.iter().map(|h| *h as f64 / total as f64).collect())
}

pub fn check_dataset(dataset: &Dataset, arch: &ArchConfig, view_radius: usize) -> Result<()> {
    if dataset.head_sizes != arch.head_sizes || arch.head_sizes != HEAD_SIZES {
        return Err(Error::config(format!(
            "dataset head sizes {:?} do not match architecture head sizes {:?}",
            dataset.head_sizes, arch.head_sizes
        )));
    }
    if dataset.episodes.iter().all(|e| e.records.is_empty()) {
        return Err(Error::usage("dataset contains no records"));
    }
    for e in &dataset.episodes {
        if let Some(r) = e.records.first() {
            if r.observation.view_radius != view_radius {
                return Err(Error::config(format!(
                    "dataset view radius {} does not match env.view_radius {view_radius}",
                    r.observation.view_radius
                )));
            }
        }
    }
    Ok(())
}

/// Epoch loop: shuffled episode batches, windowed BPTT with carried state.
pub fn pretrain(
    dataset: &Dataset,
    arch: &ArchConfig,
    view_radius: usize,
    config: &PretrainConfig,
    mut on_epoch: impl FnMut(&EpochStats, &Network) -> Result<()>,
) -> Result<(Network, Vec<EpochStats>)> {
    config.validate()?;
    check_dataset(dataset, arch, view_radius)?;
    let mut actor = Network::new(Role::Actor, arch, view_radius, config.seed)?;
    let opt_cfg = OptimizerConfig {
        kind: OptimizerKind::Adam,
        learning_rate: config.learning_rate,
        ..Default::default()
    };
    let mut optimizer = Optimizer::new(&opt_cfg, actor.params());
    let usable: Vec<&SubsampledEpisode> = dataset.episodes.iter().filter(|e| !e.records.is_empty()).collect();
    let (train_idx, held_idx) = split_holdout(usable.len(), config.holdout_fraction, config.seed);
    let held: Vec<&SubsampledEpisode> = held_idx.iter().map(|i| usable[*i]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let mut order = train_idx.clone();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut loss_weight = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let eps: Vec<&SubsampledEpisode> = chunk.iter().map(|i| usable[*i]).collect();
            let longest = eps.iter().map(|e| e.records.len()).max().unwrap_or(0);
            let mut state = actor.initial_state(eps.len());
            let mut start = 0;
            while start < longest {
                let len = config.bptt_window.min(longest - start);
                let batch = SupervisedBatch::window(&eps, start, len)?;
                let valid = batch.mask.iter().filter(|m| **m).count() as f64;
                let (loss, next) = supervised_update(
                    &mut actor,
                    &mut optimizer,
                    &batch,
                    &state,
                    &config.head_weights,
                    config.max_grad_norm,
                )?;
                loss_sum += loss * valid;
                loss_weight += valid;
                state = next;
                start += len;
            }
        }
        if !actor.params().all_finite() {
            return Err(Error::Numeric(format!("non-finite parameters after epoch {epoch}")));
        }
        let stats = EpochStats {
            epoch,
            loss: loss_sum / loss_weight.max(1.0),
            heldout_accuracy: heldout_accuracy(&actor, &held)?,
        };
        on_epoch(&stats, &actor)?;
        history.push(stats);
    }
    Ok((actor, history))
}
