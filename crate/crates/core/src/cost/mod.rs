//! Efficiency statistics of an architecture: multiply-accumulate count,
//! parameter count, input volume and the Compute/IO ratio.
//!
//! One multiply-accumulate counts as one FLOP. Convolutions are charged for
//! every kernel tap of every output element (padding taps included);
//! pooling, shifts, activations and residual additions are free.

mod compare;

pub use compare::{compare, compare_reports, read_measured, Comparison, ComparisonRow, MeasuredRow, Multipliers};

use serde::{Deserialize, Serialize};

use crate::model_ir::layer::bottleneck_convs;
use crate::model_ir::{
    conv_output_shape, layer_output_shape, trace_layers, validate, ArchSpec, ClipShape, IrError, LayerKind, LayerSpec, Shape5D,
    Triple,
};

#[derive(Debug, thiserror::Error)]
pub enum CostError {
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error("layer does not fit input {shape}: {reason}")]
    ShapeMismatch { shape: Shape5D, reason: String },
}

/// Bytes per element used for the two traffic accounts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementWidths {
    /// Decoded input frames (uint8 by default).
    pub io_bytes: u64,
    /// Activations (float32 by default).
    pub activation_bytes: u64,
}

impl Default for ElementWidths {
    fn default() -> Self {
        Self { io_bytes: 1, activation_bytes: 4 }
    }
}

/// Cost of a single layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OpCost {
    pub flops: u64,
    pub params: u64,
    pub activation_elems: u64,
}

impl std::ops::Add for OpCost {
    type Output = OpCost;

    fn add(self, rhs: OpCost) -> OpCost {
        OpCost {
            flops: self.flops + rhs.flops,
            params: self.params + rhs.params,
            activation_elems: self.activation_elems + rhs.activation_elems,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCost {
    pub stage: String,
    pub index: usize,
    pub kind: LayerKind,
    pub flops: u64,
    pub params: u64,
    pub activation_elems: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub arch: String,
    pub total_flops: u64,
    pub total_params: u64,
    pub input: ClipShape,
    /// `T·C·H·W` of one clip.
    pub input_elems: u64,
    pub input_bytes: u64,
    pub widths: ElementWidths,
    pub compute_io: f64,
    pub per_layer: Vec<LayerCost>,
}

impl CostReport {
    pub fn activation_bytes(&self) -> u64 {
        self.per_layer.iter().map(|l| l.activation_elems).sum::<u64>() * self.widths.activation_bytes
    }

    /// Totals recomputed from the per-layer entries.
    pub fn summed(&self) -> (u64, u64) {
        self.per_layer.iter().fold((0, 0), |(f, p), l| (f + l.flops, p + l.params))
    }
}

/// Cost of one plain convolution producing `out`.
pub fn conv_cost(c_in: usize, c_out: usize, kernel: Triple, out: Shape5D) -> OpCost {
    let taps = kernel.iter().product::<usize>() as u64 * c_in as u64;
    OpCost {
        flops: out.numel() as u64 * taps,
        params: taps * c_out as u64 + c_out as u64,
        activation_elems: out.numel() as u64,
    }
}

fn shape_err(shape: Shape5D) -> impl Fn(String) -> CostError {
    move |reason| CostError::ShapeMismatch { shape, reason }
}

/// Cost of `layer` applied to `in_shape`. `block_index` is the position of a
/// bottleneck within its stage and selects every-other-block inflation.
pub fn layer_cost_in_block(layer: &LayerSpec, in_shape: Shape5D, block_index: usize) -> Result<OpCost, CostError> {
    let out = layer_output_shape(layer, in_shape, block_index).map_err(shape_err(in_shape))?;
    let cost = match layer.kind {
        LayerKind::Conv2D | LayerKind::Conv3D => conv_cost(in_shape.c, layer.channels_out, layer.kernel, out),
        LayerKind::FullyConnected => {
            let weights = in_shape.c as u64 * layer.channels_out as u64;
            OpCost {
                flops: in_shape.n as u64 * weights,
                params: weights + layer.channels_out as u64,
                activation_elems: out.numel() as u64,
            }
        }
        LayerKind::ResBlockBottleneck => {
            let convs = bottleneck_convs(layer, block_index, in_shape.c).expect("shape check passed");
            let mut total = OpCost::default();
            let mut shape = in_shape;
            for g in &convs[..3] {
                let o = conv_output_shape(g, shape).map_err(shape_err(shape))?;
                total = total + conv_cost(g.c_in, g.c_out, g.kernel, o);
                shape = o;
            }
            if let Some(g) = convs.get(3) {
                total = total + conv_cost(g.c_in, g.c_out, g.kernel, out);
            }
            total
        }
        LayerKind::TemporalShift
        | LayerKind::MaxPoolSpatial
        | LayerKind::MaxPoolTemporal
        | LayerKind::AvgPoolGlobal => OpCost { flops: 0, params: 0, activation_elems: out.numel() as u64 },
    };
    Ok(cost)
}

pub fn layer_cost(layer: &LayerSpec, in_shape: Shape5D) -> Result<OpCost, CostError> {
    layer_cost_in_block(layer, in_shape, 0)
}

pub fn analyze(arch: &ArchSpec) -> Result<CostReport, CostError> {
    analyze_with(arch, ElementWidths::default())
}

/// Per-clip cost report for `arch`.
pub fn analyze_with(arch: &ArchSpec, widths: ElementWidths) -> Result<CostReport, CostError> {
    let violations = validate(arch);
    if !violations.is_empty() {
        return Err(IrError::Invalid(violations).into());
    }
    let clip = arch.input_shape();
    let mut per_layer = Vec::new();
    for tr in trace_layers(arch, clip)? {
        let c = layer_cost_in_block(tr.layer, tr.input, tr.block_index.unwrap_or(0))?;
        per_layer.push(LayerCost {
            stage: tr.stage.to_string(),
            index: tr.index,
            kind: tr.layer.kind,
            flops: c.flops,
            params: c.params,
            activation_elems: c.activation_elems,
        });
    }
    let total_flops = per_layer.iter().map(|l| l.flops).sum();
    let total_params = per_layer.iter().map(|l| l.params).sum();
    let input_elems = clip.clip_numel() as u64;
    let mut report = CostReport {
        arch: arch.name.clone(),
        total_flops,
        total_params,
        input: arch.input,
        input_elems,
        input_bytes: input_elems * widths.io_bytes,
        widths,
        compute_io: 0.0,
        per_layer,
    };
    report.compute_io = compute_io(&report);
    Ok(report)
}

/// FLOPs per input element.
pub fn compute_io(report: &CostReport) -> f64 {
    report.total_flops as f64 / report.input_elems as f64
}

/// Header of the cost CSV interchange format.
pub const CSV_HEADER: [&str; 5] = ["arch", "flops", "params", "input_elems", "compute_io"];

/// Writes one row per report in the cost CSV format.
pub fn write_csv<W: std::io::Write>(reports: &[CostReport], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in reports {
        w.write_record([
            r.arch.clone(),
            r.total_flops.to_string(),
            r.total_params.to_string(),
            r.input_elems.to_string(),
            r.compute_io.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
