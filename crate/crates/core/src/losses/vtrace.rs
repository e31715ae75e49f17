use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct VTraceInput {
    pub rewards: Vec<f64>,
    /// Per-step discount, zero after a terminal step.
    pub discounts: Vec<f64>,
    pub behavior_log_probs: Vec<f64>,
    pub target_log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub bootstrap: f64,
    pub rho_bar: f64,
    pub c_bar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VTraceResult {
    /// `v_t`.
    pub targets: Vec<f64>,
    /// `r_t + γ v_{t+1} − V(s_t)`.
    pub advantages: Vec<f64>,
    /// Truncated importance weights `ρ_t`.
    pub rhos: Vec<f64>,
}

impl VTraceResult {
    pub fn clipped_advantages(&self) -> Vec<f64> {
        self.advantages.iter().map(|a| a.max(0.0)).collect()
    }
}

impl VTraceInput {
    pub fn validate(&self) -> Result<()> {
        let t = self.rewards.len();
        if t == 0 {
            return Err(Error::usage("vtrace: empty sequence"));
        }
        for (name, len) in [
            ("discounts", self.discounts.len()),
            ("behavior_log_probs", self.behavior_log_probs.len()),
            ("target_log_probs", self.target_log_probs.len()),
            ("values", self.values.len()),
        ] {
            if len != t {
                return Err(Error::usage(format!("vtrace: {name} has length {len}, rewards {t}")));
            }
        }
        if self.discounts.iter().any(|g| !(0.0..=1.0).contains(g)) {
            return Err(Error::usage("vtrace: discounts must lie in [0, 1]"));
        }
        if !(self.c_bar > 0.0 && self.rho_bar >= self.c_bar) {
            return Err(Error::usage("vtrace: truncation levels need rho_bar >= c_bar > 0"));
        }
        Ok(())
    }
}

/// Backward recursion `v_t = V_t + δ_t + γ_t c_t (v_{t+1} − V_{t+1})`.
pub fn vtrace(input: &VTraceInput) -> Result<VTraceResult> {
    input.validate()?;
    let n = input.rewards.len();
    let mut rhos = vec![0.0; n];
    let mut cs = vec![0.0; n];
    for t in 0..n {
        let ratio = (input.target_log_probs[t] - input.behavior_log_probs[t]).exp();
        rhos[t] = ratio.min(input.rho_bar);
        cs[t] = ratio.min(input.c_bar);
    }
    let mut targets = vec![0.0; n];
    let mut next_value = input.bootstrap;
    let mut next_diff = 0.0; // v_{t+1} − V(s_{t+1})
    for t in (0..n).rev() {
        let g = input.discounts[t];
        let delta = rhos[t] * (input.rewards[t] + g * next_value - input.values[t]);
        let diff = delta + g * cs[t] * next_diff;
        targets[t] = input.values[t] + diff;
        next_value = input.values[t];
        next_diff = diff;
    }
    let advantages = (0..n)
        .map(|t| {
            let next = if t + 1 < n { targets[t + 1] } else { input.bootstrap };
            input.rewards[t] + input.discounts[t] * next - input.values[t]
        })
        .collect();
    Ok(VTraceResult {
        targets,
        advantages,
        rhos,
    })
}
