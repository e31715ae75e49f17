use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::params::ParameterSet;
use super::tensor::RealArray;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm clip; `0` disables clipping.
    pub max_grad_norm: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_grad_norm: 40.0,
        }
    }
}

/// Adam moments for one parameter set.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first: BTreeMap<String, RealArray>,
    second: BTreeMap<String, RealArray>,
}

impl AdamState {
    pub fn new(params: &ParameterSet, learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let first = params
            .iter()
            .map(|(n, p)| (n.to_string(), RealArray::zeros(p.value.shape())))
            .collect::<BTreeMap<_, _>>();
        Self {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            step: 0,
            second: first.clone(),
            first,
        }
    }

    /// One bias-corrected Adam step; gradients are zeroed afterwards.
    pub fn update(&mut self, params: &mut ParameterSet) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (name, p) in params.iter_mut() {
            let m = self
                .first
                .entry(name.to_string())
                .or_insert_with(|| RealArray::zeros(p.value.shape()));
            let v = self
                .second
                .entry(name.to_string())
                .or_insert_with(|| RealArray::zeros(p.value.shape()));
            let (grad, value) = (p.grad.data(), p.value.data_mut());
            for i in 0..grad.len() {
                let g = grad[i];
                let mi = self.beta1 * m.data()[i] + (1.0 - self.beta1) * g;
                let vi = self.beta2 * v.data()[i] + (1.0 - self.beta2) * g * g;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let mhat = mi / c1;
                let vhat = vi / c2;
                value[i] -= self.learning_rate * mhat / (vhat.sqrt() + self.epsilon);
            }
        }
        params.zero_grad();
    }
}

#[derive(Debug, Clone)]
pub enum Optimizer {
    Adam(AdamState),
    Sgd { learning_rate: f64 },
}

impl Optimizer {
    pub fn new(config: &OptimizerConfig, params: &ParameterSet) -> Self {
        match config.kind {
            OptimizerKind::Adam => Optimizer::Adam(AdamState::new(
                params,
                config.learning_rate,
                config.beta1,
                config.beta2,
                config.epsilon,
            )),
            OptimizerKind::Sgd => Optimizer::Sgd {
                learning_rate: config.learning_rate,
            },
        }
    }

    pub fn step(&mut self, params: &mut ParameterSet) {
        match self {
            Optimizer::Adam(state) => state.update(params),
            Optimizer::Sgd { learning_rate } => {
                for (_, p) in params.iter_mut() {
                    let g = p.grad.data().to_vec();
                    p.value
                        .data_mut()
                        .iter_mut()
                        .zip(&g)
                        .for_each(|(w, g)| *w -= *learning_rate * g);
                }
                params.zero_grad();
            }
        }
    }

    pub fn steps(&self) -> u64 {
        match self {
            Optimizer::Adam(s) => s.step,
            Optimizer::Sgd { .. } => 0,
        }
    }
}
