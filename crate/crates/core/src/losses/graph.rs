//! Differentiable versions of the loss terms, recorded on a [`Tape`].
//!
//! Every term takes per-row weights; masking and averaging are expressed
//! through them (zero for padding, `1/n` for a mean).

use super::objectives::KlDirection;
use crate::error::{Error, Result};
use crate::nn::{Tape, Var};

fn check_rows(tape: &Tape, v: Var, rows: usize, what: &str) -> Result<()> {
    if tape.shape(v).0 != rows {
        return Err(Error::usage(format!(
            "{what}: expected {rows} rows, got {}",
            tape.shape(v).0
        )));
    }
    Ok(())
}

fn broadcast_rows(weights: &[f64], cols: usize) -> Vec<f64> {
    weights
        .iter()
        .flat_map(|w| std::iter::repeat(*w).take(cols))
        .collect()
}

/// `Σ_heads log π_h(a_h)` per row (`rows × 1`).
pub fn action_log_prob(tape: &mut Tape, log_probs: &[Var], actions: &[Vec<usize>]) -> Result<Var> {
    let mut total: Option<Var> = None;
    for (h, lp) in log_probs.iter().enumerate() {
        check_rows(tape, *lp, actions.len(), "action_log_prob")?;
        let idx = actions
            .iter()
            .map(|a| a.get(h).copied().ok_or_else(|| Error::usage("action has too few heads")))
            .collect::<Result<Vec<_>>>()?;
        let g = tape.gather(*lp, idx)?;
        total = Some(match total {
            Some(t) => tape.add(t, g)?,
            None => g,
        });
    }
    total.ok_or_else(|| Error::usage("action_log_prob: no heads"))
}

/// `−Σ_r c_r log π(a_r)`; `c_r` carries `ρ·A` and any weighting.
pub fn policy_gradient_term(tape: &mut Tape, action_log_prob: Var, coefficients: &[f64]) -> Result<Var> {
    let neg: Vec<f64> = coefficients.iter().map(|c| -c).collect();
    tape.weighted_sum(action_log_prob, neg)
}

/// `Σ_r w_r · 0.5 (V_r − v_r)²`.
pub fn value_term(tape: &mut Tape, values: Var, targets: &[f64], weights: &[f64]) -> Result<Var> {
    check_rows(tape, values, targets.len(), "value_term")?;
    let t = tape.input(targets.len(), 1, targets.to_vec())?;
    let d = tape.sub(values, t)?;
    let sq = tape.square(d);
    tape.weighted_sum(sq, weights.iter().map(|w| 0.5 * w).collect())
}

/// `Σ_r w_r H(π_r)` summed over heads.
pub fn entropy_term(tape: &mut Tape, log_probs: &[Var], weights: &[f64]) -> Result<Var> {
    let mut total: Option<Var> = None;
    for lp in log_probs {
        check_rows(tape, *lp, weights.len(), "entropy_term")?;
        let cols = tape.shape(*lp).1;
        let p = tape.exp(*lp);
        let plogp = tape.mul(p, *lp)?;
        let neg: Vec<f64> = broadcast_rows(weights, cols).into_iter().map(|w| -w).collect();
        let h = tape.weighted_sum(plogp, neg)?;
        total = Some(match total {
            Some(t) => tape.add(t, h)?,
            None => h,
        });
    }
    total.ok_or_else(|| Error::usage("entropy_term: no heads"))
}

/// `Σ_r w_r KL` between the stored replay distribution and the current one.
/// `replay_log_probs[h]` is `rows × size_h`, row-major.
pub fn policy_cloning_term(
    tape: &mut Tape,
    log_probs: &[Var],
    replay_log_probs: &[Vec<f64>],
    weights: &[f64],
    direction: KlDirection,
) -> Result<Var> {
    if replay_log_probs.len() != log_probs.len() {
        return Err(Error::usage("policy_cloning_term: head count mismatch"));
    }
    let mut total: Option<Var> = None;
    for (lp, stored) in log_probs.iter().zip(replay_log_probs) {
        check_rows(tape, *lp, weights.len(), "policy_cloning_term")?;
        let cols = tape.shape(*lp).1;
        if stored.len() != weights.len() * cols {
            return Err(Error::usage("policy_cloning_term: stored distribution shape mismatch"));
        }
        let w = broadcast_rows(weights, cols);
        let kl = match direction {
            KlDirection::ReplayToCurrent => {
                // Σ p (ln p − ln q): only the cross-entropy part depends on q
                let mut constant = 0.0;
                let mut coef = Vec::with_capacity(stored.len());
                for (lp_old, wi) in stored.iter().zip(&w) {
                    let p = lp_old.exp();
                    if p > 0.0 {
                        constant += wi * p * lp_old;
                    }
                    coef.push(-wi * p);
                }
                let cross = tape.weighted_sum(*lp, coef)?;
                tape.add_scalar(cross, constant)
            }
            KlDirection::CurrentToReplay => {
                let q = tape.exp(*lp);
                let old = tape.input(weights.len(), cols, stored.clone())?;
                let d = tape.sub(*lp, old)?;
                let prod = tape.mul(q, d)?;
                tape.weighted_sum(prod, w)?
            }
        };
        total = Some(match total {
            Some(t) => tape.add(t, kl)?,
            None => kl,
        });
    }
    total.ok_or_else(|| Error::usage("policy_cloning_term: no heads"))
}

/// `Σ_r w_r (V_r − V_stored,r)²`.
pub fn value_cloning_term(tape: &mut Tape, values: Var, stored: &[f64], weights: &[f64]) -> Result<Var> {
    check_rows(tape, values, stored.len(), "value_cloning_term")?;
    let s = tape.input(stored.len(), 1, stored.to_vec())?;
    let d = tape.sub(values, s)?;
    let sq = tape.square(d);
    tape.weighted_sum(sq, weights.to_vec())
}
