use std::fmt;

use serde::Serialize;

use super::layer::{InflationTarget, LayerKind, LayerSpec};
use super::propagate::trace_layers;
use super::{ArchSpec, Fraction, STAGE_NAMES};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub stage: Option<String>,
    pub layer: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.stage, self.layer) {
            (Some(s), Some(i)) => write!(f, "{s}[{i}]: {}", self.message),
            (Some(s), None) => write!(f, "{s}: {}", self.message),
            _ => f.write_str(&self.message),
        }
    }
}

fn arch_level(message: impl Into<String>) -> Violation {
    Violation { stage: None, layer: None, message: message.into() }
}

fn check_layer(layer: &LayerSpec, stage: &str, out: &mut Vec<String>) {
    let k = layer.kernel;
    let s = layer.stride;
    let p = layer.padding;
    if s.contains(&0) {
        out.push("stride entries must be positive".into());
    }
    match layer.kind {
        LayerKind::Conv2D => {
            if k[0] != 1 || s[0] != 1 || p[0] != 0 {
                out.push(format!("Conv2D needs kt = 1, st = 1, pt = 0 (got kernel {k:?}, stride {s:?}, padding {p:?})"));
            }
            if k[1] == 0 || k[2] == 0 {
                out.push("Conv2D kernel must be positive".into());
            }
        }
        LayerKind::Conv3D => {
            if k.contains(&0) {
                out.push("Conv3D kernel must be positive".into());
            }
        }
        LayerKind::TemporalShift => {
            if k != [0, 0, 0] || s != [1, 1, 1] || p != [0, 0, 0] {
                out.push("TemporalShift has no kernel: expected kernel [0,0,0], stride [1,1,1], padding [0,0,0]".into());
            }
            match layer.shift_fraction {
                None => out.push("TemporalShift requires shift_fraction".into()),
                Some(f) if f > Fraction::new(1, 2).unwrap() => {
                    out.push(format!("shift_fraction {f} exceeds 1/2"));
                }
                Some(_) => {}
            }
        }
        LayerKind::MaxPoolSpatial => {
            if k[0] != 1 || s[0] != 1 || p[0] != 0 || k[1] == 0 || k[2] == 0 {
                out.push("MaxPoolSpatial needs a 1 x kh x kw window with temporal stride 1".into());
            }
        }
        LayerKind::MaxPoolTemporal => {
            if k[0] == 0 || k[1] != 1 || k[2] != 1 || s[1] != 1 || s[2] != 1 || p[1] != 0 || p[2] != 0 {
                out.push("MaxPoolTemporal needs a kt x 1 x 1 window with spatial stride 1".into());
            }
        }
        LayerKind::AvgPoolGlobal => {
            if k != [0, 0, 0] || p != [0, 0, 0] {
                out.push("AvgPoolGlobal takes no kernel or padding".into());
            }
        }
        LayerKind::FullyConnected => {
            if k != [1, 1, 1] || s != [1, 1, 1] || p != [0, 0, 0] {
                out.push("FullyConnected expects unit kernel/stride and no padding".into());
            }
        }
        LayerKind::ResBlockBottleneck => {
            if !layer.channels_out.is_multiple_of(4) {
                out.push(format!("bottleneck channels_out {} is not a multiple of 4", layer.channels_out));
            }
            if k[0] != 1 || p[0] != 0 {
                out.push("bottleneck temporal extent comes from `inflate`; kernel kt must be 1 and pt 0".into());
            }
        }
    }
    if layer.kind.is_channel_preserving() && layer.channels_out != 0 {
        out.push(format!("{:?} keeps its input channels; channels_out must be 0", layer.kind));
    }
    if !layer.kind.is_channel_preserving() && layer.channels_out == 0 {
        out.push("channels_out must be positive".into());
    }
    if layer.kind != LayerKind::TemporalShift && layer.shift_fraction.is_some() {
        out.push("shift_fraction is only meaningful on TemporalShift".into());
    }
    if let Some(inf) = layer.inflate {
        if inf.temporal_kernel == 0 || inf.temporal_kernel % 2 == 0 {
            out.push(format!("inflation temporal_kernel must be odd and >= 1, got {}", inf.temporal_kernel));
        }
        match (layer.kind, inf.target) {
            (LayerKind::ResBlockBottleneck, InflationTarget::FirstPointwise | InflationTarget::AllSpatial) => {}
            (LayerKind::Conv3D, InflationTarget::Stem) if stage == "conv1" => {
                if k[0] != inf.temporal_kernel {
                    out.push(format!("stem inflation kt {} disagrees with kernel {k:?}", inf.temporal_kernel));
                }
            }
            (kind, target) => out.push(format!("inflation target {target:?} is not valid on {kind:?} in {stage}")),
        }
    }
}

/// Checks every structural invariant of `arch`. An empty list means valid.
pub fn validate(arch: &ArchSpec) -> Vec<Violation> {
    let mut violations = Vec::new();
    let names: Vec<&str> = arch.stages.iter().map(|s| s.name.as_str()).collect();
    if names != STAGE_NAMES {
        violations.push(arch_level(format!("stage names must be {STAGE_NAMES:?}, got {names:?}")));
    }
    if arch.num_classes == 0 {
        violations.push(arch_level("num_classes must be positive"));
    }
    let input = arch.input;
    if input.t == 0 || input.c == 0 || input.h == 0 || input.w == 0 {
        violations.push(arch_level(format!("input dimensions must be positive, got {input:?}")));
    }
    for stage in &arch.stages {
        for (i, layer) in stage.layers.iter().enumerate() {
            let mut msgs = Vec::new();
            check_layer(layer, &stage.name, &mut msgs);
            violations.extend(msgs.into_iter().map(|message| Violation {
                stage: Some(stage.name.clone()),
                layer: Some(i),
                message,
            }));
        }
    }
    if !violations.is_empty() {
        return violations;
    }

    let traces = match trace_layers(arch, arch.input_shape()) {
        Ok(t) => t,
        Err(e) => {
            violations.push(arch_level(format!("shape propagation failed: {e}")));
            return violations;
        }
    };
    for tr in &traces {
        if let (LayerKind::TemporalShift, Some(f)) = (tr.layer.kind, tr.layer.shift_fraction) {
            if f.whole_part_of(tr.input.c).is_none() {
                violations.push(Violation {
                    stage: Some(tr.stage.to_string()),
                    layer: Some(tr.index),
                    message: format!(
                        "shift_fraction {f} of {} channels is {} channels per direction, not a whole number",
                        tr.input.c,
                        f.to_f64() * tr.input.c as f64
                    ),
                });
            }
        }
    }
    let fc_layers: Vec<_> = traces.iter().filter(|t| t.layer.kind == LayerKind::FullyConnected).collect();
    if let Some(last) = fc_layers.last() {
        if last.output.c != arch.num_classes {
            violations.push(arch_level(format!(
                "classifier emits {} classes but num_classes is {}",
                last.output.c, arch.num_classes
            )));
        }
    }
    if let Some(gp) = arch.stage("global-pool").filter(|s| !s.layers.is_empty()) {
        let pooled = traces.iter().rev().find(|t| t.stage == gp.name).map(|t| t.output);
        let fc_in = fc_layers.first().map(|t| t.input);
        if let (Some(p), Some(f)) = (pooled, fc_in) {
            if p.c != f.c {
                violations.push(arch_level(format!(
                    "fc input dimension {} differs from pooled channel count {}",
                    f.c, p.c
                )));
            }
        }
    }
    violations
}
