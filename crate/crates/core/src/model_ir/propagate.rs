//! Shape propagation through an [`ArchSpec`].

use super::layer::{bottleneck_convs, ConvGeometry, LayerKind, LayerSpec, Triple};
use super::shape::window_out;
use super::{ArchSpec, IrError, Shape5D};

/// A layer together with the shapes flowing through it.
#[derive(Debug, Clone)]
pub struct LayerTrace<'a> {
    pub stage: &'a str,
    pub index: usize,
    pub layer: &'a LayerSpec,
    /// Position among the bottleneck blocks of the stage.
    pub block_index: Option<usize>,
    pub input: Shape5D,
    pub output: Shape5D,
}

fn windowed(input: Shape5D, kernel: Triple, stride: Triple, padding: Triple, c_out: usize) -> Result<Shape5D, String> {
    let axis = |len, i: usize, name| {
        window_out(len, kernel[i], stride[i], padding[i]).ok_or_else(|| {
            format!(
                "{name} extent {len} exhausted by kernel {} / stride {} / padding {}",
                kernel[i], stride[i], padding[i]
            )
        })
    };
    Ok(Shape5D {
        n: input.n,
        t: axis(input.t, 0, "temporal")?,
        c: c_out,
        h: axis(input.h, 1, "height")?,
        w: axis(input.w, 2, "width")?,
    })
}

/// Output shape of one plain convolution.
pub fn conv_output_shape(geom: &ConvGeometry, input: Shape5D) -> Result<Shape5D, String> {
    if input.c != geom.c_in {
        return Err(format!("expected {} input channels, got {}", geom.c_in, input.c));
    }
    windowed(input, geom.kernel, geom.stride, geom.padding, geom.c_out)
}

/// Output shape of `layer` applied to `input`.
pub fn layer_output_shape(layer: &LayerSpec, input: Shape5D, block_index: usize) -> Result<Shape5D, String> {
    match layer.kind {
        LayerKind::Conv2D | LayerKind::Conv3D => {
            if layer.channels_out == 0 {
                return Err("convolution needs channels_out > 0".into());
            }
            windowed(input, layer.kernel, layer.stride, layer.padding, layer.channels_out)
        }
        LayerKind::TemporalShift => Ok(input),
        LayerKind::MaxPoolSpatial | LayerKind::MaxPoolTemporal => {
            windowed(input, layer.kernel, layer.stride, layer.padding, input.c)
        }
        LayerKind::AvgPoolGlobal => Ok(Shape5D { t: 1, h: 1, w: 1, ..input }),
        LayerKind::FullyConnected => {
            if (input.t, input.h, input.w) != (1, 1, 1) {
                return Err(format!("fully-connected layer needs a pooled input, got {input}"));
            }
            if layer.channels_out == 0 {
                return Err("fully-connected layer needs channels_out > 0".into());
            }
            Ok(Shape5D { c: layer.channels_out, ..input })
        }
        LayerKind::ResBlockBottleneck => {
            let convs = bottleneck_convs(layer, block_index, input.c)
                .ok_or_else(|| format!("bottleneck channels_out {} is not a multiple of 4", layer.channels_out))?;
            let mut main = input;
            for g in convs.iter().take(3) {
                main = conv_output_shape(g, main)?;
            }
            if let Some(shortcut) = convs.get(3) {
                let side = conv_output_shape(shortcut, input)?;
                if side != main {
                    return Err(format!("shortcut shape {side} does not match residual shape {main}"));
                }
            } else if main != input {
                return Err(format!("identity shortcut {input} does not match residual shape {main}"));
            }
            Ok(main)
        }
    }
}

/// Per-layer shapes for `clip`, in execution order.
pub fn trace_layers(arch: &ArchSpec, clip: Shape5D) -> Result<Vec<LayerTrace<'_>>, IrError> {
    if !arch.input.matches(&clip) || clip.n == 0 {
        return Err(IrError::IncompatibleInput { expected: arch.input_shape(), got: clip });
    }
    let mut shape = clip;
    let mut out = Vec::new();
    for stage in &arch.stages {
        let mut blocks = 0;
        for (index, layer) in stage.layers.iter().enumerate() {
            let block_index = (layer.kind == LayerKind::ResBlockBottleneck).then(|| {
                blocks += 1;
                blocks - 1
            });
            let output = layer_output_shape(layer, shape, block_index.unwrap_or(0)).map_err(|reason| {
                IrError::ShapeFailure { stage: stage.name.clone(), index, reason }
            })?;
            out.push(LayerTrace { stage: &stage.name, index, layer, block_index, input: shape, output });
            shape = output;
        }
    }
    Ok(out)
}

/// Output shape of every stage, in order. An empty stage passes its input
/// through unchanged.
pub fn propagate_shapes(arch: &ArchSpec, clip: Shape5D) -> Result<Vec<(String, Shape5D)>, IrError> {
    let traces = trace_layers(arch, clip)?;
    let mut current = clip;
    let mut out = Vec::with_capacity(arch.stages.len());
    for stage in &arch.stages {
        if let Some(last) = traces.iter().rev().find(|t| t.stage == stage.name) {
            current = last.output;
        }
        out.push((stage.name.clone(), current));
    }
    Ok(out)
}

/// Temporal extent after each of conv1, pool1, res2, res3, res4, res5.
pub fn temporal_profile(arch: &ArchSpec) -> Result<Vec<usize>, IrError> {
    let shapes = propagate_shapes(arch, arch.input_shape())?;
    Ok(shapes.iter().take(6).map(|(_, s)| s.t).collect())
}
