//! Analytical step-time model of synchronous data-parallel training.
//!
//! A step is `max(compute, io) + comm`: clip loading is pipelined against
//! the forward/backward pass, gradient exchange is not. Scalability is
//! throughput over `nodes ×` the single-node throughput.

mod profile;
mod schedule;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

pub use profile::{relative_efficiency, ClusterProfile, CommMode, SimModel, TrainConfig, Utilization};
pub use schedule::{lr_at, peak_lr};

use crate::cost::CostReport;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid cluster profile: {0}")]
    InvalidProfile(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("no utilization known for model `{0}`")]
    UnknownModel(String),
    #[error("node counts must be ascending and at least 1, got {0:?}")]
    InvalidNodes(Vec<usize>),
    #[error("timings lack a 1-node baseline row")]
    MissingBaseline,
    #[error("epoch {epoch} outside [0, {epochs}]")]
    EpochOutOfRange { epoch: f64, epochs: f64 },
    #[error("calibration impossible: {0}")]
    Calibration(String),
    #[error("malformed timings: {0}")]
    Timings(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bottleneck {
    Compute,
    Io,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepTime {
    pub t_compute: f64,
    pub t_io: f64,
    pub t_comm: f64,
    pub t_step: f64,
    pub bottleneck: Bottleneck,
}

/// Seconds of math for `n` clips on one GPU.
pub fn compute_time(cost: &CostReport, profile: &ClusterProfile, n: usize, model: &SimModel) -> Result<f64, SimError> {
    let util = profile.utilization.for_model(&cost.arch)?;
    Ok(n as f64 * cost.total_flops as f64 * model.train_multiplier / (profile.peak_flops_per_gpu * util))
}

/// Seconds to read `clips_per_node` decoded clips from one node's disk.
pub fn io_time(cost: &CostReport, profile: &ClusterProfile, clips_per_node: usize) -> f64 {
    clips_per_node as f64 * cost.input_bytes as f64 / profile.disk_bandwidth_per_node
}

/// Seconds to exchange one gradient of `params` values across
/// `profile.nodes` nodes.
pub fn comm_time(params: u64, profile: &ClusterProfile, mode: CommMode) -> f64 {
    let bytes = params as f64 * profile.bytes_per_param;
    match mode {
        CommMode::Simple => profile.net_latency + bytes / profile.net_bandwidth,
        CommMode::Ring => {
            let p = profile.nodes as f64;
            2.0 * (p - 1.0) * profile.net_latency + 2.0 * (p - 1.0) / p * bytes / profile.net_bandwidth
        }
    }
}

pub fn step_time(
    cost: &CostReport,
    profile: &ClusterProfile,
    per_gpu_batch: usize,
    model: &SimModel,
) -> Result<StepTime, SimError> {
    let t_compute = compute_time(cost, profile, per_gpu_batch, model)?;
    let t_io = io_time(cost, profile, per_gpu_batch * profile.gpus_per_node);
    let t_comm = comm_time(cost.total_params, profile, model.comm);
    Ok(combine(t_compute, t_io, t_comm * (1.0 - model.comm_overlap)))
}

/// Applies the overlap rule to the three phase times.
pub fn combine(t_compute: f64, t_io: f64, t_comm: f64) -> StepTime {
    let bottleneck = if t_io > t_compute { Bottleneck::Io } else { Bottleneck::Compute };
    StepTime { t_compute, t_io, t_comm, t_step: t_compute.max(t_io) + t_comm, bottleneck }
}

/// Videos per second for the whole cluster.
pub fn throughput(profile: &ClusterProfile, per_gpu_batch: usize, step: &StepTime) -> f64 {
    (profile.total_gpus() * per_gpu_batch) as f64 / step.t_step
}

pub fn training_time(throughput_vps: f64, cfg: &TrainConfig) -> f64 {
    cfg.epochs * cfg.dataset_clips as f64 / throughput_vps
}

/// Disk bandwidth per node at which loading exactly matches compute; below
/// it the step is IO-bound.
pub fn io_threshold_bandwidth(
    cost: &CostReport,
    profile: &ClusterProfile,
    per_gpu_batch: usize,
    model: &SimModel,
) -> Result<f64, SimError> {
    let t_compute = compute_time(cost, profile, per_gpu_batch, model)?;
    Ok((per_gpu_batch * profile.gpus_per_node) as f64 * cost.input_bytes as f64 / t_compute)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub nodes: usize,
    pub gpus: usize,
    /// Clips per step across the cluster.
    pub batch: usize,
    pub frames: usize,
    pub step: StepTime,
    pub throughput_vps: f64,
    pub scalability: f64,
    pub train_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub arch: String,
    pub per_gpu_batch: usize,
    pub single_node_vps: f64,
    pub rows: Vec<SimRow>,
}

/// Evaluates the step model at every node count. `cfg.total_gpus` is
/// ignored; each row uses `nodes · gpus_per_node`.
pub fn sweep(
    cost: &CostReport,
    profile: &ClusterProfile,
    nodes: &[usize],
    cfg: &TrainConfig,
    model: &SimModel,
) -> Result<SimResult, SimError> {
    profile.validate()?;
    cfg.validate()?;
    model.validate()?;
    if nodes.is_empty() || nodes[0] == 0 || nodes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SimError::InvalidNodes(nodes.to_vec()));
    }
    let n = cfg.per_gpu_batch;
    let single = profile.with_nodes(1);
    let single_step = step_time(cost, &single, n, model)?;
    let single_node_vps = throughput(&single, n, &single_step);
    let mut rows = Vec::with_capacity(nodes.len());
    for &p in nodes {
        let prof = profile.with_nodes(p);
        let step = step_time(cost, &prof, n, model)?;
        let vps = throughput(&prof, n, &step);
        rows.push(SimRow {
            nodes: p,
            gpus: prof.total_gpus(),
            batch: prof.total_gpus() * n,
            frames: cost.input.t,
            step,
            throughput_vps: vps,
            // vps / (p · single_node_vps), with the common clip count cancelled.
            scalability: single_step.t_step / step.t_step,
            train_time_s: training_time(vps, cfg),
        });
    }
    Ok(SimResult { arch: cost.arch.clone(), per_gpu_batch: n, single_node_vps, rows })
}

pub const SWEEP_CSV_HEADER: [&str; 11] = [
    "nodes",
    "gpus",
    "batch",
    "frames",
    "t_compute_s",
    "t_io_s",
    "t_comm_s",
    "t_step_s",
    "throughput_vps",
    "scalability",
    "train_time_s",
];

pub fn write_sweep_csv<W: Write>(result: &SimResult, out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_CSV_HEADER)?;
    for r in &result.rows {
        w.write_record([
            r.nodes.to_string(),
            r.gpus.to_string(),
            r.batch.to_string(),
            r.frames.to_string(),
            r.step.t_compute.to_string(),
            r.step.t_io.to_string(),
            r.step.t_comm.to_string(),
            r.step.t_step.to_string(),
            r.throughput_vps.to_string(),
            r.scalability.to_string(),
            r.train_time_s.to_string(),
        ])?;
    }
    w.flush().map_err(|e| SimError::Io("sweep output".into(), e))?;
    Ok(())
}

/// Measured wall time of a full training run on `nodes` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub nodes: usize,
    pub wall_seconds: f64,
}

/// Parses `nodes,wall_seconds` CSV; the header is required.
pub fn read_timings<R: Read>(input: R) -> Result<Vec<Timing>, SimError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != ["nodes", "wall_seconds"] {
        return Err(SimError::Timings(format!("expected header `nodes,wall_seconds`, got `{}`", header.join(","))));
    }
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        let t: Timing = rec?;
        if t.nodes == 0 || !(t.wall_seconds > 0.0 && t.wall_seconds.is_finite()) {
            return Err(SimError::Timings(format!("non-positive row {t:?}")));
        }
        out.push(t);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedScalability {
    pub nodes: usize,
    pub scalability: f64,
}

/// `baseline / (p · time(p))` for every row, against the 1-node row.
pub fn observed_scalability(timings: &[Timing]) -> Result<Vec<ObservedScalability>, SimError> {
    let base = timings.iter().find(|t| t.nodes == 1).ok_or(SimError::MissingBaseline)?.wall_seconds;
    Ok(timings
        .iter()
        .map(|t| ObservedScalability { nodes: t.nodes, scalability: base / (t.nodes as f64 * t.wall_seconds) })
        .collect())
}

/// Fits a profile's free parameters to two observations: the utilization
/// anchor from single-node throughput (compute-bound), then ring bandwidth
/// from the scalability at `nodes` given a fixed per-hop latency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTarget {
    pub single_node_vps: f64,
    pub nodes: usize,
    pub scalability: f64,
    pub per_gpu_batch: usize,
}

pub fn calibrate(
    cost: &CostReport,
    template: &ClusterProfile,
    target: &CalibrationTarget,
    model: &SimModel,
) -> Result<ClusterProfile, SimError> {
    let fail = |m: String| Err(SimError::Calibration(m));
    if model.comm != CommMode::Ring || model.comm_overlap != 0.0 {
        return fail("bandwidth fitting assumes ring all-reduce without overlap".into());
    }
    if target.nodes < 2 || !(target.scalability > 0.0 && target.scalability < 1.0) {
        return fail(format!("need scalability in (0, 1) at two or more nodes, got {target:?}"));
    }
    let n = target.per_gpu_batch;
    let g = template.gpus_per_node as f64;
    // Single node: ring comm vanishes, so throughput = g·n / t_compute.
    let t1 = g * n as f64 / target.single_node_vps;
    let util = n as f64 * cost.total_flops as f64 * model.train_multiplier / (template.peak_flops_per_gpu * t1);
    let mut prof = template.clone();
    prof.utilization = match &template.utilization {
        Utilization::Anchored(_) => Utilization::Anchored(util / relative_efficiency(&cost.arch)?),
        Utilization::PerModel(m) => {
            let mut m = m.clone();
            m.insert(cost.arch.clone(), util);
            Utilization::PerModel(m)
        }
    };
    let single = prof.with_nodes(1);
    if io_time(cost, &single, n * template.gpus_per_node) > t1 {
        return fail("the calibration model is IO-bound on one node".into());
    }
    let p = target.nodes as f64;
    let comm = t1 / target.scalability - t1;
    let transfer = comm - 2.0 * (p - 1.0) * template.net_latency;
    if transfer <= 0.0 {
        return fail(format!("latency alone exceeds the {comm:.3e} s communication budget"));
    }
    let bytes = cost.total_params as f64 * template.bytes_per_param;
    prof.net_bandwidth = 2.0 * (p - 1.0) / p * bytes / transfer;
    prof.validate()?;
    Ok(prof)
}
