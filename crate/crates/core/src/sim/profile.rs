use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::model_ir::Preset;

/// Achieved fraction of peak FLOP/s.
///
/// A bare number anchors the 32-frame pointwise-inflated I3D; the other
/// presets scale it by their measured relative hardware efficiency. A map
/// gives every model its own value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Utilization {
    Anchored(f64),
    PerModel(BTreeMap<String, f64>),
}

impl Utilization {
    pub fn for_model(&self, arch: &str) -> Result<f64, SimError> {
        let u = match self {
            Utilization::Anchored(anchor) => anchor * relative_efficiency(arch)?,
            Utilization::PerModel(map) => *map.get(arch).ok_or_else(|| SimError::UnknownModel(arch.to_string()))?,
        };
        if !(u > 0.0 && u <= 1.0) {
            return Err(SimError::InvalidProfile(format!("utilization of {arch} is {u}, outside (0, 1]")));
        }
        Ok(u)
    }

    fn values(&self) -> Vec<f64> {
        match self {
            Utilization::Anchored(a) => vec![*a],
            Utilization::PerModel(m) => m.values().copied().collect(),
        }
    }
}

/// Hardware efficiency of a preset relative to the pointwise-inflated I3D.
pub fn relative_efficiency(arch: &str) -> Result<f64, SimError> {
    Preset::from_str(arch).map(Preset::relative_utilization).map_err(|_| SimError::UnknownModel(arch.to_string()))
}

fn default_bytes_per_param() -> f64 {
    4.0
}

/// One homogeneous cluster. SI units throughout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterProfile {
    pub nodes: usize,
    pub gpus_per_node: usize,
    pub peak_flops_per_gpu: f64,
    pub utilization: Utilization,
    pub disk_bandwidth_per_node: f64,
    pub net_latency: f64,
    pub net_bandwidth: f64,
    #[serde(default = "default_bytes_per_param")]
    pub bytes_per_param: f64,
}

impl ClusterProfile {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |what: &str, v: f64| SimError::InvalidProfile(format!("{what} must be positive and finite, got {v}"));
        if self.nodes == 0 || self.gpus_per_node == 0 {
            return Err(SimError::InvalidProfile("nodes and gpus_per_node must be at least 1".into()));
        }
        for (what, v) in [
            ("peak_flops_per_gpu", self.peak_flops_per_gpu),
            ("disk_bandwidth_per_node", self.disk_bandwidth_per_node),
            ("net_latency", self.net_latency),
            ("net_bandwidth", self.net_bandwidth),
            ("bytes_per_param", self.bytes_per_param),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(bad(what, v));
            }
        }
        for u in self.utilization.values() {
            if !(u > 0.0 && u <= 1.0) {
                return Err(SimError::InvalidProfile(format!("utilization {u} outside (0, 1]")));
            }
        }
        Ok(())
    }

    pub fn with_nodes(&self, nodes: usize) -> Self {
        Self { nodes, ..self.clone() }
    }

    pub fn total_gpus(&self) -> usize {
        self.nodes * self.gpus_per_node
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let p: Self = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(path.display().to_string(), e))?;
        Self::from_json(&text)
    }
}

fn d_base_lr() -> f64 {
    0.00125
}
fn d_epochs() -> f64 {
    100.0
}
fn d_warmup() -> f64 {
    5.0
}
fn d_clips() -> u64 {
    240_000
}

/// Large-batch schedule. `total_gpus` is `k`, `per_gpu_batch` is `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub per_gpu_batch: usize,
    pub total_gpus: usize,
    #[serde(default = "d_base_lr")]
    pub base_lr_per_8: f64,
    #[serde(default = "d_epochs")]
    pub epochs: f64,
    #[serde(default = "d_warmup")]
    pub warmup_epochs: f64,
    #[serde(default = "d_clips")]
    pub dataset_clips: u64,
}

impl TrainConfig {
    pub fn new(per_gpu_batch: usize, total_gpus: usize) -> Self {
        Self {
            per_gpu_batch,
            total_gpus,
            base_lr_per_8: d_base_lr(),
            epochs: d_epochs(),
            warmup_epochs: d_warmup(),
            dataset_clips: d_clips(),
        }
    }

    /// `k` taken from the cluster.
    pub fn for_profile(profile: &ClusterProfile, per_gpu_batch: usize) -> Self {
        Self::new(per_gpu_batch, profile.total_gpus())
    }

    pub fn total_batch(&self) -> usize {
        self.total_gpus * self.per_gpu_batch
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let err = |m: String| Err(SimError::InvalidConfig(m));
        if self.per_gpu_batch == 0 || self.total_gpus == 0 {
            return err("per-GPU batch and GPU count must be at least 1".into());
        }
        if !(self.base_lr_per_8 > 0.0 && self.base_lr_per_8.is_finite()) {
            return err(format!("base learning rate must be positive, got {}", self.base_lr_per_8));
        }
        if !(self.epochs > 0.0 && self.epochs.is_finite()) {
            return err(format!("epochs must be positive, got {}", self.epochs));
        }
        if !(self.warmup_epochs >= 0.0 && self.warmup_epochs < self.epochs) {
            return err(format!("warmup of {} epochs must lie in [0, {})", self.warmup_epochs, self.epochs));
        }
        if self.dataset_clips == 0 {
            return err("dataset must hold at least one clip".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommMode {
    /// `latency + bytes / bandwidth`, once per step.
    Simple,
    /// Bandwidth-optimal ring all-reduce over the nodes.
    #[default]
    Ring,
}

impl FromStr for CommMode {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "simple" => Ok(CommMode::Simple),
            "ring" => Ok(CommMode::Ring),
            _ => Err(SimError::InvalidConfig(format!("unknown communication mode `{s}` (valid: simple, ring)"))),
        }
    }
}

/// Knobs of the step-time model that are not properties of the cluster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimModel {
    /// Training FLOPs per forward FLOP.
    pub train_multiplier: f64,
    pub comm: CommMode,
    /// Fraction of communication hidden behind compute.
    pub comm_overlap: f64,
}

impl Default for SimModel {
    fn default() -> Self {
        Self { train_multiplier: 3.0, comm: CommMode::Ring, comm_overlap: 0.0 }
    }
}

impl SimModel {
    pub fn with_comm(comm: CommMode) -> Self {
        Self { comm, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.train_multiplier > 0.0 && self.train_multiplier.is_finite()) {
            return Err(SimError::InvalidConfig(format!("train multiplier must be positive, got {}", self.train_multiplier)));
        }
        if !(0.0..1.0).contains(&self.comm_overlap) {
            return Err(SimError::InvalidConfig(format!("comm overlap must lie in [0, 1), got {}", self.comm_overlap)));
        }
        Ok(())
    }
}
