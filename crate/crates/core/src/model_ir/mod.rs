//! Video-CNN architectures as data: layer descriptions, presets, shape
//! propagation and structural validation.

mod arch;
mod fraction;
pub mod layer;
mod presets;
mod propagate;
mod shape;
mod validate;

pub use arch::{ArchSpec, Stage, STAGE_NAMES};
pub use fraction::Fraction;
pub use layer::{InflationScope, InflationSpec, InflationTarget, LayerKind, LayerSpec, Triple};
pub use presets::{
    build_preset, build_preset_with, micro_tsm, micro_tsm_default, resnet50_2d, scaled_preset, Preset,
    PresetOptions, DEFAULT_NUM_CLASSES,
};
pub use propagate::{conv_output_shape, layer_output_shape, propagate_shapes, temporal_profile, trace_layers, LayerTrace};
pub use shape::{window_out, ClipShape, Shape5D};
pub use validate::{validate, Violation};

#[derive(Debug, thiserror::Error)]
pub enum IrError {
    #[error("unknown preset `{name}` (valid: {})", valid.join(", "))]
    UnknownPreset { name: String, valid: Vec<&'static str> },
    #[error("shape {0} has a non-positive dimension")]
    NonPositiveShape(Shape5D),
    #[error("input {got} is incompatible with architecture input {expected}")]
    IncompatibleInput { expected: Shape5D, got: Shape5D },
    #[error("{stage}[{index}]: {reason}")]
    ShapeFailure { stage: String, index: usize, reason: String },
    #[error("invalid fraction `{0}`, expected p/q")]
    InvalidFraction(String),
    #[error("architecture is invalid: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("malformed architecture file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cannot read {0}: {1}")]
    Io(String, #[source] std::io::Error),
}

/// Resolves a preset name or a path to an architecture JSON file, and
/// validates the result.
pub fn resolve_arch(name_or_path: &str) -> Result<ArchSpec, IrError> {
    let arch = match name_or_path.parse::<Preset>() {
        Ok(p) => build_preset_with(p, &PresetOptions::default()),
        Err(unknown) => {
            let path = std::path::Path::new(name_or_path);
            if !path.exists() {
                return Err(unknown);
            }
            ArchSpec::load(path)?
        }
    };
    let violations = validate(&arch);
    if violations.is_empty() {
        Ok(arch)
    } else {
        Err(IrError::Invalid(violations))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temporal(name: &str) -> Vec<usize> {
        temporal_profile(&build_preset(name).unwrap()).unwrap()
    }

    #[test]
    fn preset_input_frames() {
        assert_eq!(build_preset("tsm8f").unwrap().input.t, 8);
        assert_eq!(build_preset("i3d_3x3x3").unwrap().input.t, 16);
        assert_eq!(build_preset("i3d_3x1x1").unwrap().input.t, 32);
    }

    #[test]
    fn unknown_preset_lists_valid_names() {
        let err = build_preset("c3d").unwrap_err().to_string();
        for name in ["tsm8f", "i3d_3x3x3", "i3d_3x1x1"] {
            assert!(err.contains(name), "{err}");
        }
    }

    #[test]
    fn temporal_resolution_rows() {
        assert_eq!(temporal("tsm8f"), vec![8, 8, 8, 8, 8, 8]);
        assert_eq!(temporal("i3d_3x3x3"), vec![16, 8, 8, 4, 2, 1]);
        assert_eq!(temporal("i3d_3x1x1"), vec![16, 8, 8, 4, 4, 4]);
    }

    #[test]
    fn res5_is_7x7_at_224() {
        for p in Preset::ALL {
            let arch = build_preset_with(p, &PresetOptions::default());
            let shapes = propagate_shapes(&arch, arch.input_shape()).unwrap();
            let res5 = shapes.iter().find(|(n, _)| n == "res5").unwrap().1;
            assert_eq!((res5.h, res5.w, res5.c), (7, 7, 2048), "{p}");
            let gp = shapes.iter().find(|(n, _)| n == "global-pool").unwrap().1;
            assert_eq!((gp.t, gp.h, gp.w), (1, 1, 1));
        }
    }

    #[test]
    fn i3d_3x3x3_inflates_every_spatial_conv() {
        let arch = build_preset("i3d_3x3x3").unwrap();
        let mut blocks = 0;
        for tr in trace_layers(&arch, arch.input_shape()).unwrap() {
            if tr.layer.kind == LayerKind::ResBlockBottleneck {
                let convs = layer::bottleneck_convs(tr.layer, tr.block_index.unwrap(), tr.input.c).unwrap();
                assert_eq!(convs[1].kernel, [3, 3, 3]);
                blocks += 1;
            }
        }
        assert_eq!(blocks, 16);
    }

    #[test]
    fn tsm_has_no_temporal_stride() {
        let arch = build_preset("tsm8f").unwrap();
        let product: usize = arch.layers().map(|(_, _, l)| l.stride[0]).product();
        assert_eq!(product, 1);
        let shifts = arch.layers().filter(|(_, _, l)| l.kind == LayerKind::TemporalShift).count();
        assert_eq!(shifts, 16);
    }

    #[test]
    fn shift_preserves_shape() {
        let arch = build_preset("tsm8f").unwrap();
        for tr in trace_layers(&arch, arch.input_shape().with_n(3)).unwrap() {
            if tr.layer.kind == LayerKind::TemporalShift {
                assert_eq!(tr.input, tr.output);
            }
        }
    }

    #[test]
    fn presets_validate() {
        for p in Preset::ALL {
            assert!(validate(&build_preset_with(p, &PresetOptions::default())).is_empty(), "{p}");
        }
        assert!(validate(&micro_tsm_default(Fraction::new(1, 8).unwrap())).is_empty());
        assert!(validate(&resnet50_2d(8, 400)).is_empty());
        for p in Preset::ALL {
            let micro = scaled_preset(p, 8, p.default_frames(), 32, 4);
            assert!(validate(&micro).is_empty(), "{p}: {:?}", validate(&micro));
        }
    }

    #[test]
    fn non_integral_shift_is_a_violation() {
        let mut arch = micro_tsm(4, 4, 5, 4, Fraction::new(1, 8).unwrap());
        arch.input.c = 4;
        let v = validate(&arch);
        assert!(v.iter().any(|v| v.message.contains("not a whole number")), "{v:?}");
    }

    #[test]
    fn conv2d_with_temporal_kernel_is_a_violation() {
        let mut arch = build_preset("tsm8f").unwrap();
        arch.stages[0].layers[0].kernel[0] = 3;
        let v = validate(&arch);
        assert!(v.iter().any(|v| v.message.contains("Conv2D needs kt = 1")), "{v:?}");
    }

    #[test]
    fn incompatible_clip_rejected() {
        let arch = build_preset("tsm8f").unwrap();
        let clip = Shape5D::new(1, 16, 3, 224, 224).unwrap();
        assert!(matches!(propagate_shapes(&arch, clip), Err(IrError::IncompatibleInput { .. })));
    }

    #[test]
    fn exhausted_dimension_is_an_error() {
        let opts = PresetOptions { frames: Some(1), ..Default::default() };
        let arch = build_preset_with(Preset::I3d3x3x3, &opts);
        let err = propagate_shapes(&arch, arch.input_shape()).unwrap_err();
        assert!(matches!(err, IrError::ShapeFailure { .. }), "{err}");
        assert!(!validate(&arch).is_empty());
    }

    #[test]
    fn wrong_stage_names_rejected() {
        let mut arch = build_preset("tsm8f").unwrap();
        arch.stages[2].name = "stage2".into();
        assert!(!validate(&arch).is_empty());
    }

    #[test]
    fn json_rejects_unknown_keys() {
        let arch = build_preset("tsm8f").unwrap();
        let mut value: serde_json::Value = serde_json::from_str(&arch.to_json()).unwrap();
        value["stages"][0]["layers"][0]["dilation"] = serde_json::json!([1, 1, 1]);
        assert!(ArchSpec::from_json(&value.to_string()).is_err());
        value = serde_json::from_str(&arch.to_json()).unwrap();
        value["extra"] = serde_json::json!(1);
        assert!(ArchSpec::from_json(&value.to_string()).is_err());
    }

    #[test]
    fn json_layer_layout() {
        let arch = build_preset("tsm8f").unwrap();
        let value: serde_json::Value = serde_json::from_str(&arch.to_json()).unwrap();
        let shift = &value["stages"][2]["layers"][0];
        assert_eq!(shift["kind"], "TemporalShift");
        assert_eq!(shift["shift_fraction"], "1/8");
        assert_eq!(value["input"]["t"], 8);
        let i3d: serde_json::Value = serde_json::from_str(&build_preset("i3d_3x1x1").unwrap().to_json()).unwrap();
        assert_eq!(i3d["stages"][2]["layers"][0]["inflate"]["target"], "first-1x1");
        assert_eq!(i3d["stages"][2]["layers"][0]["inflate"]["apply_to"], "every-other-block");
    }
}
