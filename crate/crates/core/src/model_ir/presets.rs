//! ResNet-50 based video backbones: the shift-based straight-up design and
//! two inflated, temporally pooled designs, plus desk-scale micro variants.

use std::fmt;
use std::str::FromStr;

use super::layer::{InflationScope, InflationSpec, InflationTarget, LayerKind, LayerSpec, Triple};
use super::{ArchSpec, ClipShape, Fraction, IrError, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Tsm8f,
    I3d3x3x3,
    I3d3x1x1,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::I3d3x3x3, Preset::I3d3x1x1, Preset::Tsm8f];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Tsm8f => "tsm8f",
            Preset::I3d3x3x3 => "i3d_3x3x3",
            Preset::I3d3x1x1 => "i3d_3x1x1",
        }
    }

    pub fn default_frames(self) -> usize {
        match self {
            Preset::Tsm8f => 8,
            Preset::I3d3x3x3 => 16,
            Preset::I3d3x1x1 => 32,
        }
    }

    pub fn default_stem_kt(self) -> usize {
        match self {
            Preset::Tsm8f => 1,
            Preset::I3d3x3x3 => 7,
            Preset::I3d3x1x1 => 5,
        }
    }

    /// Hardware-efficiency multiplier relative to `i3d_3x1x1`.
    pub fn relative_utilization(self) -> f64 {
        match self {
            Preset::Tsm8f => 2.0,
            Preset::I3d3x3x3 => 1.8,
            Preset::I3d3x1x1 => 1.0,
        }
    }

    pub fn valid_names() -> Vec<&'static str> {
        Self::ALL.iter().map(|p| p.name()).collect()
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = IrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| IrError::UnknownPreset { name: s.to_string(), valid: Self::valid_names() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PresetOptions {
    pub frames: Option<usize>,
    /// Temporal kernel of an inflated stem (ignored by `tsm8f`).
    pub stem_temporal_kernel: Option<usize>,
    pub shift_fraction: Fraction,
    pub num_classes: usize,
    pub spatial: usize,
}

impl Default for PresetOptions {
    fn default() -> Self {
        Self {
            frames: None,
            stem_temporal_kernel: None,
            shift_fraction: Fraction::new(1, 8).unwrap(),
            num_classes: 400,
            spatial: 224,
        }
    }
}

pub const DEFAULT_NUM_CLASSES: usize = 400;

const BLOCKS: [usize; 4] = [3, 4, 6, 3];
const WIDTHS: [usize; 4] = [64, 128, 256, 512];

/// How each ResNet stage is wired.
struct StagePlan {
    /// Layer inserted ahead of every bottleneck (temporal shift).
    before_block: Option<LayerSpec>,
    /// Layer placed at the start of the stage (temporal pooling).
    stage_prefix: [Option<LayerSpec>; 4],
    /// Temporal stride of the first block of each stage.
    temporal_stride: [usize; 4],
    inflate: Option<InflationSpec>,
}

fn residual_stages(plan: &StagePlan, width_div: usize, blocks: [usize; 4]) -> Vec<Stage> {
    let names = ["res2", "res3", "res4", "res5"];
    (0..4)
        .map(|i| {
            let mut layers = Vec::new();
            if let Some(prefix) = &plan.stage_prefix[i] {
                layers.push(prefix.clone());
            }
            for b in 0..blocks[i] {
                if let Some(before) = &plan.before_block {
                    layers.push(before.clone());
                }
                let stride: Triple = if b == 0 && i > 0 { [plan.temporal_stride[i], 2, 2] } else { [1, 1, 1] };
                layers.push(LayerSpec::bottleneck(WIDTHS[i] * 4 / width_div, stride, plan.inflate));
            }
            Stage::new(names[i], layers)
        })
        .collect()
}

fn assemble(name: &str, input: ClipShape, stem: Vec<LayerSpec>, pool: Vec<LayerSpec>, res: Vec<Stage>, classes: usize) -> ArchSpec {
    let mut stages = vec![Stage::new("conv1", stem), Stage::new("pool1", pool)];
    stages.extend(res);
    stages.push(Stage::new("global-pool", vec![LayerSpec::avg_pool_global()]));
    stages.push(Stage::new("fc", vec![LayerSpec::fully_connected(classes)]));
    ArchSpec { name: name.to_string(), num_classes: classes, input, stages }
}

fn stem_conv(c_out: usize, kt: usize, st: usize) -> LayerSpec {
    if kt == 1 && st == 1 {
        LayerSpec::conv2d(c_out, 7, 2, 3)
    } else {
        LayerSpec::conv3d(c_out, [kt, 7, 7], [st, 2, 2], [kt / 2, 3, 3]).with_inflation(InflationSpec {
            target: InflationTarget::Stem,
            temporal_kernel: kt,
            apply_to: InflationScope::EveryBlock,
        })
    }
}

fn build(preset: Preset, opts: &PresetOptions, width_div: usize, blocks: [usize; 4]) -> ArchSpec {
    let frames = opts.frames.unwrap_or(preset.default_frames());
    let stem_kt = opts.stem_temporal_kernel.unwrap_or(preset.default_stem_kt());
    let input = ClipShape { t: frames, c: 3, h: opts.spatial, w: opts.spatial };
    let stem_width = 64 / width_div;
    let spatial_pool = LayerSpec::max_pool_spatial(3, 2, 1);
    let halve_t = LayerSpec::max_pool_temporal(2, 2, 0);
    match preset {
        Preset::Tsm8f => {
            let plan = StagePlan {
                before_block: Some(LayerSpec::temporal_shift(opts.shift_fraction)),
                stage_prefix: [None, None, None, None],
                temporal_stride: [1; 4],
                inflate: None,
            };
            assemble(
                preset.name(),
                input,
                vec![LayerSpec::conv2d(stem_width, 7, 2, 3)],
                vec![spatial_pool],
                residual_stages(&plan, width_div, blocks),
                opts.num_classes,
            )
        }
        Preset::I3d3x3x3 => {
            // T: stem keeps, pool1 halves, res3/res4/res5 halve on entry.
            let plan = StagePlan {
                before_block: None,
                stage_prefix: [None, None, None, None],
                temporal_stride: [1, 2, 2, 2],
                inflate: Some(InflationSpec {
                    target: InflationTarget::AllSpatial,
                    temporal_kernel: 3,
                    apply_to: InflationScope::EveryBlock,
                }),
            };
            assemble(
                preset.name(),
                input,
                vec![stem_conv(stem_width, stem_kt, 1)],
                vec![spatial_pool, halve_t],
                residual_stages(&plan, width_div, blocks),
                opts.num_classes,
            )
        }
        Preset::I3d3x1x1 => {
            // T: stem halves, pool1 halves, pooling between res2 and res3 halves.
            let plan = StagePlan {
                before_block: None,
                stage_prefix: [None, Some(halve_t.clone()), None, None],
                temporal_stride: [1; 4],
                inflate: Some(InflationSpec {
                    target: InflationTarget::FirstPointwise,
                    temporal_kernel: 3,
                    apply_to: InflationScope::EveryOtherBlock,
                }),
            };
            assemble(
                preset.name(),
                input,
                vec![stem_conv(stem_width, stem_kt, 2)],
                vec![spatial_pool, halve_t],
                residual_stages(&plan, width_div, blocks),
                opts.num_classes,
            )
        }
    }
}

/// Builds a named preset with the default 400-class head.
pub fn build_preset(name: &str) -> Result<ArchSpec, IrError> {
    let preset: Preset = name.parse()?;
    Ok(build_preset_with(preset, &PresetOptions::default()))
}

pub fn build_preset_with(preset: Preset, opts: &PresetOptions) -> ArchSpec {
    build(preset, opts, 1, BLOCKS)
}

/// Plain frame-wise 2D ResNet-50: no shifts, no inflation, no temporal pooling.
pub fn resnet50_2d(frames: usize, num_classes: usize) -> ArchSpec {
    let mut arch = build(
        Preset::Tsm8f,
        &PresetOptions { frames: Some(frames), num_classes, ..Default::default() },
        1,
        BLOCKS,
    );
    for stage in &mut arch.stages {
        stage.layers.retain(|l| l.kind != LayerKind::TemporalShift);
    }
    arch.name = "resnet50_2d".to_string();
    arch
}

/// Full-depth preset with every channel width divided by `width_div`, for
/// running the real topology through the reference kernels.
pub fn scaled_preset(preset: Preset, width_div: usize, frames: usize, spatial: usize, num_classes: usize) -> ArchSpec {
    let opts = PresetOptions { frames: Some(frames), num_classes, spatial, ..Default::default() };
    let mut arch = build(preset, &opts, width_div, BLOCKS);
    arch.name = format!("{}-micro", preset.name());
    arch
}

/// Two-block shift network used for gradient checking: a 3x3 stem, a
/// spatial max-pool, one shifted bottleneck in each of res2 and res3, global
/// pooling and a classifier. res4/res5 are left empty.
pub fn micro_tsm(channels: usize, frames: usize, spatial: usize, num_classes: usize, shift: Fraction) -> ArchSpec {
    let shift_layer = LayerSpec::temporal_shift(shift);
    let stages = vec![
        Stage::new("conv1", vec![LayerSpec::conv2d(channels, 3, 1, 1)]),
        Stage::new("pool1", vec![LayerSpec::max_pool_spatial(3, 1, 1)]),
        Stage::new("res2", vec![shift_layer.clone(), LayerSpec::bottleneck(2 * channels, [1, 1, 1], None)]),
        Stage::new("res3", vec![shift_layer, LayerSpec::bottleneck(2 * channels, [1, 1, 1], None)]),
        Stage::new("res4", vec![]),
        Stage::new("res5", vec![]),
        Stage::new("global-pool", vec![LayerSpec::avg_pool_global()]),
        Stage::new("fc", vec![LayerSpec::fully_connected(num_classes)]),
    ];
    ArchSpec {
        name: "micro-tsm".to_string(),
        num_classes,
        input: ClipShape { t: frames, c: channels, h: spatial, w: spatial },
        stages,
    }
}

/// The gradient-check network at its standard size: T=4, C=8, H=W=5, 4 classes.
pub fn micro_tsm_default(shift: Fraction) -> ArchSpec {
    micro_tsm(8, 4, 5, 4, shift)
}
