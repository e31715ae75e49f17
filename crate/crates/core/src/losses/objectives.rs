use serde::{Deserialize, Serialize};

use super::vtrace::VTraceResult;
use crate::agent::{kl_divergence, ComposedDistribution};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlDirection {
    /// `KL(replay ‖ current)`.
    ReplayToCurrent,
    /// `KL(current ‖ replay)`.
    CurrentToReplay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Online,
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub policy_cloning: f64,
    pub value_cloning: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            policy: 1.0,
            value: 0.5,
            entropy: 0.01,
            policy_cloning: 0.01,
            value_cloning: 0.005,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("loss.policy", self.policy),
            ("loss.value", self.value),
            ("loss.entropy", self.entropy),
            ("loss.policy_cloning", self.policy_cloning),
            ("loss.value_cloning", self.value_cloning),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::config(format!("{name} must be a finite non-negative weight, got {w}")));
            }
        }
        Ok(())
    }
}

/// Individual loss terms of one update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub policy: f64,
    pub value: f64,
    /// Mean entropy; enters the total with a negative sign.
    pub entropy: f64,
    pub policy_cloning: f64,
    pub value_cloning: f64,
}

/// Per-step weights `ρ_t · A_t` of the policy-gradient term, zeroed where masked.
pub fn pg_coefficients(result: &VTraceResult, clip_advantage: bool, mask: Option<&[bool]>) -> Vec<f64> {
    result
        .rhos
        .iter()
        .zip(&result.advantages)
        .enumerate()
        .map(|(t, (rho, a))| {
            if mask.is_some_and(|m| !m[t]) {
                return 0.0;
            }
            let a = if clip_advantage { a.max(0.0) } else { *a };
            rho * a
        })
        .collect()
}

/// `−Σ_t ρ_t A_t log π(a_t|s_t)` with the advantage treated as a constant.
pub fn pg_loss(log_probs: &[f64], result: &VTraceResult, clip_advantage: bool) -> Result<f64> {
    if log_probs.len() != result.rhos.len() {
        return Err(Error::usage("pg_loss: log-prob and V-trace lengths differ"));
    }
    let c = pg_coefficients(result, clip_advantage, None);
    Ok(-c.iter().zip(log_probs).map(|(c, l)| c * l).sum::<f64>())
}

/// `0.5 Σ_t (v_t − V(s_t))²`.
pub fn value_loss(values: &[f64], targets: &[f64]) -> Result<f64> {
    if values.len() != targets.len() {
        return Err(Error::usage("value_loss: length mismatch"));
    }
    Ok(0.5 * values.iter().zip(targets).map(|(v, t)| (t - v) * (t - v)).sum::<f64>())
}

/// Policy- and value-cloning losses, averaged over the (replay-only) steps.
pub fn clear_losses(
    current: &[ComposedDistribution],
    replay: &[ComposedDistribution],
    current_values: &[f64],
    replay_values: &[f64],
    sources: &[Source],
    direction: KlDirection,
) -> Result<(f64, f64)> {
    let n = current.len();
    if replay.len() != n || current_values.len() != n || replay_values.len() != n || sources.len() != n {
        return Err(Error::usage("clear_losses: length mismatch"));
    }
    if sources.iter().any(|s| *s == Source::Online) {
        return Err(Error::usage("clear_losses: cloning terms apply to replay samples only"));
    }
    if n == 0 {
        return Ok((0.0, 0.0));
    }
    let mut kl = 0.0;
    let mut mse = 0.0;
    for t in 0..n {
        kl += match direction {
            KlDirection::ReplayToCurrent => kl_divergence(&replay[t], &current[t])?,
            KlDirection::CurrentToReplay => kl_divergence(&current[t], &replay[t])?,
        };
        let d = current_values[t] - replay_values[t];
        mse += d * d;
    }
    Ok((kl / n as f64, mse / n as f64))
}

/// Weighted sum; entropy is a bonus and therefore subtracted.
pub fn total_loss(c: &LossComponents, w: &LossWeights) -> f64 {
    let mut total = 0.0;
    for (weight, value, sign) in [
        (w.policy, c.policy, 1.0),
        (w.value, c.value, 1.0),
        (w.entropy, c.entropy, -1.0),
        (w.policy_cloning, c.policy_cloning, 1.0),
        (w.value_cloning, c.value_cloning, 1.0),
    ] {
        if weight != 0.0 {
            total += sign * weight * value;
        }
    }
    total
}
