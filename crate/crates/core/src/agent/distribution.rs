use rand::Rng;

use crate::env::{ComposedAction, HEAD_COUNT};
use crate::error::{Error, Result};

/// Independent categorical distribution per action head.
#[derive(Debug, Clone, PartialEq)]
pub struct ComposedDistribution {
    heads: Vec<Vec<f64>>,
}

fn check_probs(p: &[f64]) -> Result<()> {
    if p.is_empty() || p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::usage("head probabilities must be finite and non-negative"));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::usage(format!("head probabilities sum to {s}, not 1")));
    }
    Ok(())
}

impl ComposedDistribution {
    pub fn new(heads: Vec<Vec<f64>>) -> Result<Self> {
        for h in &heads {
            check_probs(h)?;
        }
        Ok(Self { heads })
    }

    /// Builds from per-head log-probabilities.
    pub fn from_log_probs(log_probs: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(
            log_probs
                .into_iter()
                .map(|h| h.into_iter().map(f64::exp).collect())
                .collect(),
        )
    }

    pub fn uniform(sizes: &[usize]) -> Self {
        Self {
            heads: sizes.iter().map(|n| vec![1.0 / *n as f64; *n]).collect(),
        }
    }

    pub fn heads(&self) -> &[Vec<f64>] {
        &self.heads
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.heads.iter().map(Vec::len).collect()
    }

    pub fn sample_indices(&self, rng: &mut impl Rng) -> Vec<usize> {
        self.heads
            .iter()
            .map(|p| {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (i, pi) in p.iter().enumerate() {
                    acc += pi;
                    if u < acc {
                        return i;
                    }
                }
                // rounding: fall back to the last class with mass
                p.iter().rposition(|x| *x > 0.0).unwrap_or(p.len() - 1)
            })
            .collect()
    }

    pub fn mode_indices(&self) -> Vec<usize> {
        self.heads
            .iter()
            .map(|p| {
                p.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, x)| if *x > best.1 { (i, *x) } else { best })
                    .0
            })
            .collect()
    }

    pub fn log_prob_indices(&self, idx: &[usize]) -> Result<f64> {
        if idx.len() != self.heads.len() {
            return Err(Error::usage("action has the wrong number of heads"));
        }
        let mut total = 0.0;
        for (p, i) in self.heads.iter().zip(idx) {
            let pi = p
                .get(*i)
                .ok_or_else(|| Error::usage(format!("action index {i} out of range for head of size {}", p.len())))?;
            total += pi.ln();
        }
        Ok(total)
    }

    pub fn head_log_probs(&self, idx: &[usize]) -> Result<Vec<f64>> {
        if idx.len() != self.heads.len() {
            return Err(Error::usage("action has the wrong number of heads"));
        }
        self.heads
            .iter()
            .zip(idx)
            .map(|(p, i)| {
                p.get(*i)
                    .map(|x| x.ln())
                    .ok_or_else(|| Error::usage(format!("action index {i} out of range")))
            })
            .collect()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Result<ComposedAction> {
        self.expect_env_heads()?;
        ComposedAction::from_indices(&self.sample_indices(rng))
    }

    pub fn mode(&self) -> Result<ComposedAction> {
        self.expect_env_heads()?;
        ComposedAction::from_indices(&self.mode_indices())
    }

    pub fn log_prob(&self, action: &ComposedAction) -> Result<f64> {
        self.log_prob_indices(&action.to_indices())
    }

    fn expect_env_heads(&self) -> Result<()> {
        if self.heads.len() != HEAD_COUNT {
            return Err(Error::usage("distribution does not match the environment heads"));
        }
        Ok(())
    }

    pub fn head_entropy(p: &[f64]) -> f64 {
        -p.iter().filter(|x| **x > 0.0).map(|x| x * x.ln()).sum::<f64>()
    }

    pub fn entropy(&self) -> f64 {
        self.heads.iter().map(|p| Self::head_entropy(p)).sum()
    }
}

/// `Σ_heads Σ_i p_i ln(p_i / q_i)`.
pub fn kl_divergence(p: &ComposedDistribution, q: &ComposedDistribution) -> Result<f64> {
    if p.sizes() != q.sizes() {
        return Err(Error::usage("kl_divergence: head structures differ"));
    }
    let mut total = 0.0;
    for (ph, qh) in p.heads.iter().zip(&q.heads) {
        for (pi, qi) in ph.iter().zip(qh) {
            if *pi > 0.0 {
                total += pi * (pi.ln() - qi.ln());
            }
        }
    }
    Ok(total)
}
