use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::settings::{AblationConfig, TrainConfig};
use crate::agent::{FeatureBatch, Network, RecurrentState, Role};
use crate::env::HEAD_COUNT;
use crate::error::{Error, Result};
use crate::losses::graph::{
    action_log_prob, entropy_term, policy_cloning_term, policy_gradient_term, value_cloning_term, value_term,
};
use crate::losses::{pg_coefficients, vtrace, KlDirection, LossComponents, LossWeights, Source, VTraceInput};
use crate::nn::{Optimizer, OptimizerConfig, OptimizerKind, Tape, Var};
use crate::replay::TrajectorySegment;

/// A composed batch flattened into time-major rows (`row = t * batch + b`).
#[derive(Debug, Clone)]
pub struct PreparedBatch {
    pub steps: usize,
    pub batch: usize,
    /// `steps + 1` observations per segment, the last used for bootstrapping.
    pub features: FeatureBatch,
    pub actor_state: RecurrentState,
    pub critic_state: RecurrentState,
    pub actions: Vec<Vec<usize>>,
    pub valid: Vec<bool>,
    pub replay: Vec<bool>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// Log-probability of the taken action under the behavior policy.
    pub behavior_action_log_prob: Vec<f64>,
    /// Stored behavior distributions per head, `rows × size` each.
    pub behavior_log_probs: Vec<Vec<f64>>,
    pub behavior_values: Vec<f64>,
}

impl PreparedBatch {
    pub fn new(segments: &[(Arc<TrajectorySegment>, Source)]) -> Result<Self> {
        let batch = segments.len();
        if batch == 0 {
            return Err(Error::usage("learner batch is empty"));
        }
        let steps = segments[0].0.len();
        if segments.iter().any(|(s, _)| s.len() != steps) {
            return Err(Error::usage("segments in a batch must share one length"));
        }
        let rows = steps * batch;
        let obs: Vec<Vec<_>> = (0..=steps)
            .map(|t| segments.iter().map(|(s, _)| &s.observations[t]).collect())
            .collect();
        let features = FeatureBatch::from_sequences(&obs);
        let actor_state = RecurrentState::stack(&segments.iter().map(|(s, _)| &s.actor_state).collect::<Vec<_>>())?;
        let critic_state = RecurrentState::stack(&segments.iter().map(|(s, _)| &s.critic_state).collect::<Vec<_>>())?;
        let sizes: Vec<usize> = segments[0].0.behavior_log_probs[0].iter().map(Vec::len).collect();
        let mut out = Self {
            steps,
            batch,
            features,
            actor_state,
            critic_state,
            actions: Vec::with_capacity(rows),
            valid: Vec::with_capacity(rows),
            replay: Vec::with_capacity(rows),
            rewards: Vec::with_capacity(rows),
            dones: Vec::with_capacity(rows),
            behavior_action_log_prob: Vec::with_capacity(rows),
            behavior_log_probs: sizes.iter().map(|n| Vec::with_capacity(rows * n)).collect(),
            behavior_values: Vec::with_capacity(rows),
        };
        for t in 0..steps {
            for (s, src) in segments {
                let a = s.actions[t];
                let blp = &s.behavior_log_probs[t];
                out.actions.push(a.to_vec());
                out.valid.push(s.valid[t]);
                out.replay.push(*src == Source::Replay);
                out.rewards.push(s.rewards[t]);
                out.dones.push(s.dones[t]);
                out.behavior_action_log_prob
                    .push((0..HEAD_COUNT).map(|h| blp[h][a[h]]).sum());
                for (h, dst) in out.behavior_log_probs.iter_mut().enumerate() {
                    dst.extend_from_slice(&blp[h]);
                }
                out.behavior_values.push(s.behavior_values[t]);
            }
        }
        Ok(out)
    }

    pub fn rows(&self) -> usize {
        self.steps * self.batch
    }
}

/// Tape handles for the learner's forward pass (first `steps` rows only).
#[derive(Debug, Clone)]
pub struct LearnerOutputs {
    pub log_probs: Vec<Var>,
    pub values: Var,
    pub bootstrap: Vec<f64>,
}

/// Per-row constants of the loss: everything treated as fixed by the gradient.
#[derive(Debug, Clone)]
pub struct LossConstants {
    pub pg: Vec<f64>,
    pub value_targets: Vec<f64>,
    pub step_weights: Vec<f64>,
    pub replay_weights: Vec<f64>,
    pub mean_rho: f64,
    pub valid_steps: usize,
    pub replay_steps: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub components: LossComponents,
    pub total: f64,
    pub mean_rho: f64,
    pub valid_steps: usize,
    pub replay_steps: usize,
    pub actor_grad_norm: f64,
    pub critic_grad_norm: f64,
}

pub struct Learner {
    pub actor: Network,
    pub critic: Option<Network>,
    actor_opt: Optimizer,
    critic_opt: Option<Optimizer>,
    pub ablation: AblationConfig,
    pub train: TrainConfig,
    pub weights: LossWeights,
    pub updates: u64,
}

impl Learner {
    pub fn new(
        actor: Network,
        critic: Option<Network>,
        ablation: AblationConfig,
        train: TrainConfig,
        weights: LossWeights,
    ) -> Result<Self> {
        match (&critic, actor.role()) {
            (None, Role::Shared) => {}
            (Some(c), Role::Actor) if c.role() == Role::Critic => {}
            _ => {
                return Err(Error::config(
                    "learner needs either a shared network or an actor/critic pair",
                ))
            }
        }
        let opt = OptimizerConfig {
            kind: OptimizerKind::Adam,
            learning_rate: train.learning_rate,
            max_grad_norm: train.max_grad_norm,
            ..Default::default()
        };
        Ok(Self {
            actor_opt: Optimizer::new(&opt, actor.params()),
            critic_opt: critic.as_ref().map(|c| Optimizer::new(&opt, c.params())),
            actor,
            critic,
            ablation,
            train,
            weights,
            updates: 0,
        })
    }

    pub fn forward(&self, tape: &mut Tape, prepared: &PreparedBatch) -> Result<LearnerOutputs> {
        let rows = prepared.rows();
        let b = prepared.batch;
        let out_a = self.actor.forward(tape, &prepared.features, &prepared.actor_state)?;
        let all_values = match &self.critic {
            Some(c) => c
                .forward(tape, &prepared.features, &prepared.critic_state)?
                .values
                .expect("critic has a value head"),
            None => out_a.values.expect("shared network has a value head"),
        };
        let log_probs = out_a
            .log_probs
            .iter()
            .map(|lp| tape.slice_rows(*lp, 0, rows))
            .collect::<Result<Vec<_>>>()?;
        let values = tape.slice_rows(all_values, 0, rows)?;
        let bootstrap = tape.value(all_values)[rows..rows + b].to_vec();
        Ok(LearnerOutputs {
            log_probs,
            values,
            bootstrap,
        })
    }

    /// V-trace targets and loss weights from the current forward pass.
    pub fn constants(&self, tape: &Tape, prepared: &PreparedBatch, out: &LearnerOutputs) -> Result<LossConstants> {
        let (steps, b) = (prepared.steps, prepared.batch);
        let rows = prepared.rows();
        let values = tape.value(out.values);
        let mut target_lp = vec![0.0; rows];
        for (h, lp) in out.log_probs.iter().enumerate() {
            let cols = tape.shape(*lp).1;
            let v = tape.value(*lp);
            for (r, tl) in target_lp.iter_mut().enumerate() {
                *tl += v[r * cols + prepared.actions[r][h]];
            }
        }
        let mut pg = vec![0.0; rows];
        let mut targets = vec![0.0; rows];
        let mut rho_sum = 0.0;
        let valid_steps = prepared.valid.iter().filter(|v| **v).count();
        let replay_steps = prepared
            .valid
            .iter()
            .zip(&prepared.replay)
            .filter(|(v, r)| **v && **r)
            .count();
        for j in 0..b {
            let idx: Vec<usize> = (0..steps).map(|t| t * b + j).collect();
            let input = VTraceInput {
                rewards: idx.iter().map(|r| prepared.rewards[*r] * self.train.reward_scale).collect(),
                discounts: idx
                    .iter()
                    .map(|r| if prepared.dones[*r] { 0.0 } else { self.train.gamma })
                    .collect(),
                behavior_log_probs: idx.iter().map(|r| prepared.behavior_action_log_prob[*r]).collect(),
                target_log_probs: idx.iter().map(|r| target_lp[*r]).collect(),
                values: idx.iter().map(|r| values[*r]).collect(),
                bootstrap: out.bootstrap[j],
                rho_bar: self.train.rho_bar,
                c_bar: self.train.c_bar,
            };
            let res = vtrace(&input)?;
            let mask: Vec<bool> = idx.iter().map(|r| prepared.valid[*r]).collect();
            let coef = pg_coefficients(&res, self.ablation.ac, Some(&mask));
            for (k, r) in idx.iter().enumerate() {
                pg[*r] = coef[k];
                targets[*r] = res.targets[k];
                if mask[k] {
                    rho_sum += res.rhos[k];
                }
            }
        }
        let n = valid_steps.max(1) as f64;
        let nr = replay_steps.max(1) as f64;
        Ok(LossConstants {
            pg: pg.iter().map(|c| c / n).collect(),
            value_targets: targets,
            step_weights: prepared.valid.iter().map(|v| if *v { 1.0 / n } else { 0.0 }).collect(),
            replay_weights: prepared
                .valid
                .iter()
                .zip(&prepared.replay)
                .map(|(v, r)| if *v && *r { 1.0 / nr } else { 0.0 })
                .collect(),
            mean_rho: rho_sum / n,
            valid_steps,
            replay_steps,
        })
    }

    /// Records the weighted loss; during warmup only the value terms are present.
    pub fn loss(
        &self,
        tape: &mut Tape,
        prepared: &PreparedBatch,
        out: &LearnerOutputs,
        k: &LossConstants,
        warmup: bool,
    ) -> Result<(Var, LossComponents)> {
        let w = &self.weights;
        let mut parts: Vec<Var> = Vec::new();
        let mut comp = LossComponents::default();
        let value = value_term(tape, out.values, &k.value_targets, &k.step_weights)?;
        comp.value = tape.scalar(value);
        parts.push(tape.scale(value, w.value));
        let cloning = self.ablation.cl && k.replay_steps > 0;
        if cloning {
            let vc = value_cloning_term(tape, out.values, &prepared.behavior_values, &k.replay_weights)?;
            comp.value_cloning = tape.scalar(vc);
            parts.push(tape.scale(vc, w.value_cloning));
        }
        if !warmup {
            let alp = action_log_prob(tape, &out.log_probs, &prepared.actions)?;
            let pg = policy_gradient_term(tape, alp, &k.pg)?;
            comp.policy = tape.scalar(pg);
            parts.push(tape.scale(pg, w.policy));
            let ent = entropy_term(tape, &out.log_probs, &k.step_weights)?;
            comp.entropy = tape.scalar(ent);
            parts.push(tape.scale(ent, -w.entropy));
            if cloning {
                let pc = policy_cloning_term(
                    tape,
                    &out.log_probs,
                    &prepared.behavior_log_probs,
                    &k.replay_weights,
                    self.train.kl_direction,
                )?;
                comp.policy_cloning = tape.scalar(pc);
                parts.push(tape.scale(pc, w.policy_cloning));
            }
        }
        let mut total = parts[0];
        for p in &parts[1..] {
            total = tape.add(total, *p)?;
        }
        Ok((total, comp))
    }

    pub fn kl_direction(&self) -> KlDirection {
        self.train.kl_direction
    }

    /// One gradient step on a composed batch.
    pub fn update(&mut self, segments: &[(Arc<TrajectorySegment>, Source)], warmup: bool) -> Result<UpdateStats> {
        let prepared = PreparedBatch::new(segments)?;
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, &prepared)?;
        let k = self.constants(&tape, &prepared, &out)?;
        let (loss, components) = self.loss(&mut tape, &prepared, &out, &k, warmup)?;
        let total = tape.scalar(loss);
        if !total.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss at update {}", self.updates)));
        }
        let grads = tape.backward(loss)?;
        let clip = self.train.max_grad_norm;

        let scope = self.actor.scope();
        let shared = self.critic.is_none();
        let mut actor_grad_norm = 0.0;
        if !warmup || shared {
            let params = self.actor.params_mut();
            params.zero_grad();
            tape.accumulate_into(&grads, scope, params)?;
            if warmup {
                // the policy stays fixed: only the value head of a shared network learns
                let value_prefix = format!("{scope}/value.");
                for (name, p) in params.iter_mut() {
                    if !name.starts_with(&value_prefix) {
                        p.grad.fill(0.0);
                    }
                }
            }
            actor_grad_norm = params.clip_grad_norm(clip);
            self.actor_opt.step(params);
        }
        let mut critic_grad_norm = 0.0;
        if let (Some(critic), Some(opt)) = (self.critic.as_mut(), self.critic_opt.as_mut()) {
            let scope = critic.scope();
            let params = critic.params_mut();
            params.zero_grad();
            tape.accumulate_into(&grads, scope, params)?;
            critic_grad_norm = params.clip_grad_norm(clip);
            opt.step(params);
        }
        self.updates += 1;
        Ok(UpdateStats {
            components,
            total,
            mean_rho: k.mean_rho,
            valid_steps: k.valid_steps,
            replay_steps: k.replay_steps,
            actor_grad_norm,
            critic_grad_norm,
        })
    }
}
