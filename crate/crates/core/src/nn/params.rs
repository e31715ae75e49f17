use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use super::tensor::RealArray;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub value: RealArray,
    pub grad: RealArray,
}

/// Named parameters with matching gradient accumulators.
///
/// Names are kept sorted so that iteration order (and therefore checkpoint
/// layout, hashing and optimizer state) is deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterSet {
    params: BTreeMap<String, Parameter>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: RealArray) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::config(format!("duplicate parameter name `{name}`")));
        }
        let grad = RealArray::zeros(value.shape());
        self.params.insert(name, Parameter { value, grad });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Parameter> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Parameter> {
        self.params.get_mut(name)
    }

    pub fn value(&self, name: &str) -> Result<&RealArray> {
        self.params
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| Error::config(format!("missing parameter `{name}`")))
    }

    pub fn value_mut(&mut self, name: &str) -> Result<&mut RealArray> {
        self.params
            .get_mut(name)
            .map(|p| &mut p.value)
            .ok_or_else(|| Error::config(format!("missing parameter `{name}`")))
    }

    pub fn grad(&self, name: &str) -> Result<&RealArray> {
        self.params
            .get(name)
            .map(|p| &p.grad)
            .ok_or_else(|| Error::config(format!("missing parameter `{name}`")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Parameter)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Parameter)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params.values_mut() {
            p.grad.fill(0.0);
        }
    }

    pub fn accumulate_grad(&mut self, name: &str, grad: &[f64]) -> Result<()> {
        let p = self
            .params
            .get_mut(name)
            .ok_or_else(|| Error::config(format!("missing parameter `{name}`")))?;
        if p.grad.len() != grad.len() {
            return Err(Error::config(format!(
                "gradient for `{name}` has {} values, parameter has {}",
                grad.len(),
                p.grad.len()
            )));
        }
        for (g, d) in p.grad.data_mut().iter_mut().zip(grad) {
            *g += d;
        }
        Ok(())
    }

    pub fn grad_norm(&self) -> f64 {
        self.params
            .values()
            .map(|p| p.grad.sq_norm())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales all gradients so their global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let scale = max_norm / norm;
            for p in self.params.values_mut() {
                p.grad.data_mut().iter_mut().for_each(|g| *g *= scale);
            }
        }
        norm
    }

    /// Moves every parameter of `other` into this set under `prefix`.
    pub fn merge_prefixed(&mut self, prefix: &str, other: &ParameterSet) -> Result<()> {
        for (name, p) in other.iter() {
            self.insert(format!("{prefix}{name}"), p.value.clone())?;
        }
        Ok(())
    }

    /// Extracts the parameters whose names start with `prefix`, stripping it.
    pub fn extract_prefixed(&self, prefix: &str) -> ParameterSet {
        let mut out = ParameterSet::new();
        for (name, p) in self.iter() {
            if let Some(rest) = name.strip_prefix(prefix) {
                out.params.insert(
                    rest.to_string(),
                    Parameter {
                        value: p.value.clone(),
                        grad: RealArray::zeros(p.value.shape()),
                    },
                );
            }
        }
        out
    }

    /// SHA-256 over names, shapes and raw value bits.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (name, p) in self.iter() {
            h.update(name.as_bytes());
            for d in p.value.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for v in p.value.data() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.params.values().all(|p| p.value.all_finite())
    }
}
