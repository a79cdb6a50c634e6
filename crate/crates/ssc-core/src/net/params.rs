//! Named parameter storage, He initialization, and running-statistic
//! normalization state.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::NetworkConfig;
use super::plan::layers_of;
use crate::error::{CoreError, Result};
use crate::fmath;
use crate::tensor::{Scalar, Tensor};

/// Ordered map from parameter name to tensor. Iteration order is the
/// creation order, which the optimizer and checkpoint format rely on.
#[derive(Debug, Clone)]
pub struct ParameterSet<S: Scalar> {
    entries: Vec<(String, Tensor<S>)>,
    index: BTreeMap<String, usize>,
}

impl<S: Scalar> Default for ParameterSet<S> {
    fn default() -> Self {
        ParameterSet {
            entries: Vec::new(),
            index: BTreeMap::new(),
        }
    }
}

impl<S: Scalar> ParameterSet<S> {
    pub fn insert(&mut self, name: &str, tensor: Tensor<S>) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(CoreError::InvalidConfig(alloc::format!(
                "duplicate parameter name `{name}`"
            )));
        }
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push((name.to_string(), tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<S>> {
        self.index
            .get(name)
            .map(|&i| &self.entries[i].1)
            .ok_or_else(|| CoreError::MissingEntry(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<S>> {
        match self.index.get(name) {
            Some(&i) => Ok(&mut self.entries[i].1),
            None => Err(CoreError::MissingEntry(name.to_string())),
        }
    }

    /// Weight and bias of a conv layer.
    pub fn conv(&self, layer: &str) -> Result<(&Tensor<S>, &Tensor<S>)> {
        Ok((
            self.get(&alloc::format!("{layer}.weight"))?,
            self.get(&alloc::format!("{layer}.bias"))?,
        ))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<S>)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar elements across all tensors.
    pub fn total_elements(&self) -> u64 {
        self.entries.iter().map(|(_, t)| t.len() as u64).sum()
    }

    /// Same names and shapes, all values zero.
    pub fn zeros_like(&self) -> ParameterSet<S> {
        let mut out = ParameterSet::default();
        for (name, t) in &self.entries {
            out.insert(name, Tensor::zeros(t.shape())).expect("unique");
        }
        out
    }

    /// Adds `other` into `self` elementwise (same names and shapes).
    pub fn accumulate(&mut self, other: &ParameterSet<S>) -> Result<()> {
        if self.len() != other.len() {
            return Err(CoreError::InvalidConfig(
                "parameter sets differ in entry count".into(),
            ));
        }
        for ((an, at), (bn, bt)) in self.entries.iter_mut().zip(&other.entries) {
            if an != bn {
                return Err(CoreError::MissingEntry(bn.clone()));
            }
            at.check_same_shape(bt, "accumulate")?;
            for (a, &b) in at.data_mut().iter_mut().zip(bt.data()) {
                *a = S::from_f64(a.to_f64() + b.to_f64());
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.entries.iter_mut() {
            for v in t.data_mut() {
                *v = S::from_f64(v.to_f64() * factor);
            }
        }
    }

    pub fn cast<T: Scalar>(&self) -> ParameterSet<T> {
        let mut out = ParameterSet::default();
        for (name, t) in &self.entries {
            out.insert(name, t.cast()).expect("unique");
        }
        out
    }
}

/// One standard normal draw via Box-Muller; two uniform draws per sample
/// keeps the stream independent of any library's caching strategy.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // (0, 1] to keep ln() finite.
    let u1 = 1.0 - (rng.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0);
    let u2 = (rng.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0);
    fmath::sqrt(-2.0 * fmath::ln(u1)) * fmath::cos(2.0 * core::f64::consts::PI * u2)
}

/// He-normal initialization: conv weights `~ N(0, 2 / fan_in)` with
/// `fan_in = Cin * kd * kh * kw`, biases zero. Deterministic in `seed`.
pub fn init_params<S: Scalar>(config: &NetworkConfig, seed: u64) -> Result<ParameterSet<S>> {
    let layers = layers_of(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParameterSet::default();
    for layer in &layers {
        let spec = &layer.spec;
        let fan_in = spec.in_channels * spec.kernel[0] * spec.kernel[1] * spec.kernel[2];
        let std = fmath::sqrt(2.0 / fan_in as f64);
        let mut weight = Tensor::<S>::zeros(&spec.weight_shape());
        for v in weight.data_mut() {
            *v = S::from_f64(standard_normal(&mut rng) * std);
        }
        params.insert(&alloc::format!("{}.weight", layer.name), weight)?;
        params.insert(
            &alloc::format!("{}.bias", layer.name),
            Tensor::zeros(&[spec.out_channels]),
        )?;
    }
    Ok(params)
}

/// Per-channel running mean/variance for the trunk convolutions, used
/// when `NetworkConfig::normalization` is on. The statistics are treated
/// as constants by the backward pass.
#[derive(Debug, Clone)]
pub struct NormState {
    entries: Vec<(String, Vec<f64>, Vec<f64>)>,
    index: BTreeMap<String, usize>,
    pub momentum: f64,
    pub epsilon: f64,
}

impl NormState {
    /// Mean 0 / variance 1 for every normalized layer: the identity until
    /// statistics are accumulated.
    pub fn new(config: &NetworkConfig) -> Result<Self> {
        let mut entries = Vec::new();
        let mut index = BTreeMap::new();
        for layer in layers_of(config)? {
            if layer.normalized {
                index.insert(layer.name.clone(), entries.len());
                let c = layer.spec.out_channels;
                entries.push((layer.name, alloc::vec![0.0; c], alloc::vec![1.0; c]));
            }
        }
        Ok(NormState {
            entries,
            index,
            momentum: 0.9,
            epsilon: 1e-5,
        })
    }

    pub fn stats(&self, layer: &str) -> Option<(&[f64], &[f64])> {
        self.index
            .get(layer)
            .map(|&i| (&self.entries[i].1[..], &self.entries[i].2[..]))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64], &[f64])> {
        self.entries
            .iter()
            .map(|(n, m, v)| (n.as_str(), &m[..], &v[..]))
    }

    pub fn set(&mut self, layer: &str, mean: Vec<f64>, var: Vec<f64>) -> Result<()> {
        let i = *self
            .index
            .get(layer)
            .ok_or_else(|| CoreError::MissingEntry(layer.to_string()))?;
        if mean.len() != self.entries[i].1.len() || var.len() != self.entries[i].2.len() {
            return Err(CoreError::InvalidConfig(alloc::format!(
                "norm stats for `{layer}` have the wrong channel count"
            )));
        }
        self.entries[i].1 = mean;
        self.entries[i].2 = var;
        Ok(())
    }

    /// Folds one observed batch of per-channel statistics into the
    /// running values.
    pub fn update(&mut self, layer: &str, batch_mean: &[f64], batch_var: &[f64]) -> Result<()> {
        let i = *self
            .index
            .get(layer)
            .ok_or_else(|| CoreError::MissingEntry(layer.to_string()))?;
        let m = self.momentum;
        for (r, &b) in self.entries[i].1.iter_mut().zip(batch_mean) {
            *r = m * *r + (1.0 - m) * b;
        }
        for (r, &b) in self.entries[i].2.iter_mut().zip(batch_var) {
            *r = m * *r + (1.0 - m) * b;
        }
        Ok(())
    }
}
