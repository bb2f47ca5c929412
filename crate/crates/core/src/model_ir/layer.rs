use serde::{Deserialize, Serialize};

use super::Fraction;

/// `(temporal, height, width)` triple used for kernels, strides and padding.
pub type Triple = [usize; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    #[serde(rename = "Conv2D")]
    Conv2D,
    #[serde(rename = "Conv3D")]
    Conv3D,
    TemporalShift,
    MaxPoolSpatial,
    MaxPoolTemporal,
    AvgPoolGlobal,
    FullyConnected,
    ResBlockBottleneck,
}

impl LayerKind {
    pub fn is_conv(self) -> bool {
        matches!(self, LayerKind::Conv2D | LayerKind::Conv3D)
    }

    /// Layers that keep the channel count of their input.
    pub fn is_channel_preserving(self) -> bool {
        matches!(
            self,
            LayerKind::TemporalShift
                | LayerKind::MaxPoolSpatial
                | LayerKind::MaxPoolTemporal
                | LayerKind::AvgPoolGlobal
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InflationTarget {
    /// The leading 1x1 conv of a bottleneck becomes `kt x 1 x 1`.
    #[serde(rename = "first-1x1")]
    FirstPointwise,
    /// The 3x3 conv of a bottleneck becomes `kt x 3 x 3`.
    #[serde(rename = "all-3x3")]
    AllSpatial,
    /// Marks the stem conv as inflated; its kernel must carry `kt`.
    #[serde(rename = "conv1-stem")]
    Stem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InflationScope {
    #[serde(rename = "every-block")]
    EveryBlock,
    /// Blocks 0, 2, 4, ... within each stage.
    #[serde(rename = "every-other-block")]
    EveryOtherBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InflationSpec {
    pub target: InflationTarget,
    pub temporal_kernel: usize,
    pub apply_to: InflationScope,
}

impl InflationSpec {
    pub fn applies_to_block(&self, block_index: usize) -> bool {
        match self.apply_to {
            InflationScope::EveryBlock => true,
            InflationScope::EveryOtherBlock => block_index.is_multiple_of(2),
        }
    }
}

/// One entry of a stage. A `ResBlockBottleneck` expands to
/// `1x1 -> 3x3 -> 1x1` convolutions plus a projection shortcut when the
/// channel count or stride changes; its `kernel`/`padding` describe the
/// spatial 3x3 conv before inflation, `stride` applies to the 3x3 conv and
/// the shortcut, and `channels_out` is the expanded (4x width) output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub kernel: Triple,
    pub stride: Triple,
    pub padding: Triple,
    /// Output channels; 0 on channel-preserving layers.
    pub channels_out: usize,
    #[serde(default)]
    pub shift_fraction: Option<Fraction>,
    #[serde(default)]
    pub inflate: Option<InflationSpec>,
}

impl LayerSpec {
    fn base(kind: LayerKind) -> Self {
        Self {
            kind,
            kernel: [1, 1, 1],
            stride: [1, 1, 1],
            padding: [0, 0, 0],
            channels_out: 0,
            shift_fraction: None,
            inflate: None,
        }
    }

    pub fn conv2d(c_out: usize, k: usize, stride: usize, pad: usize) -> Self {
        Self {
            kernel: [1, k, k],
            stride: [1, stride, stride],
            padding: [0, pad, pad],
            channels_out: c_out,
            ..Self::base(LayerKind::Conv2D)
        }
    }

    pub fn conv3d(c_out: usize, kernel: Triple, stride: Triple, padding: Triple) -> Self {
        Self { kernel, stride, padding, channels_out: c_out, ..Self::base(LayerKind::Conv3D) }
    }

    pub fn temporal_shift(fraction: Fraction) -> Self {
        Self {
            kernel: [0, 0, 0],
            shift_fraction: Some(fraction),
            ..Self::base(LayerKind::TemporalShift)
        }
    }

    pub fn max_pool_spatial(k: usize, stride: usize, pad: usize) -> Self {
        Self {
            kernel: [1, k, k],
            stride: [1, stride, stride],
            padding: [0, pad, pad],
            ..Self::base(LayerKind::MaxPoolSpatial)
        }
    }

    pub fn max_pool_temporal(k: usize, stride: usize, pad: usize) -> Self {
        Self {
            kernel: [k, 1, 1],
            stride: [stride, 1, 1],
            padding: [pad, 0, 0],
            ..Self::base(LayerKind::MaxPoolTemporal)
        }
    }

    pub fn avg_pool_global() -> Self {
        Self { kernel: [0, 0, 0], ..Self::base(LayerKind::AvgPoolGlobal) }
    }

    pub fn fully_connected(c_out: usize) -> Self {
        Self { channels_out: c_out, ..Self::base(LayerKind::FullyConnected) }
    }

    pub fn bottleneck(c_out: usize, stride: Triple, inflate: Option<InflationSpec>) -> Self {
        Self {
            kernel: [1, 3, 3],
            stride,
            padding: [0, 1, 1],
            channels_out: c_out,
            inflate,
            ..Self::base(LayerKind::ResBlockBottleneck)
        }
    }

    pub fn with_inflation(mut self, inflate: InflationSpec) -> Self {
        self.inflate = Some(inflate);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BottleneckRole {
    Reduce,
    Spatial,
    Expand,
    Shortcut,
}

/// A plain convolution inside an expanded bottleneck block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub role: BottleneckRole,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: Triple,
    pub stride: Triple,
    pub padding: Triple,
}

impl ConvGeometry {
    pub fn weight_len(&self) -> usize {
        self.c_out * self.c_in * self.kernel.iter().product::<usize>()
    }
}

/// Expands a bottleneck block into its constituent convolutions.
/// `block_index` counts bottlenecks within the stage (for every-other-block
/// inflation). Returns `None` unless `channels_out` is a multiple of 4.
pub fn bottleneck_convs(layer: &LayerSpec, block_index: usize, c_in: usize) -> Option<Vec<ConvGeometry>> {
    if layer.kind != LayerKind::ResBlockBottleneck || !layer.channels_out.is_multiple_of(4) {
        return None;
    }
    let c_out = layer.channels_out;
    let width = c_out / 4;
    let (mut kt_reduce, mut kt_spatial) = (1, layer.kernel[0]);
    if let Some(inf) = layer.inflate.filter(|i| i.applies_to_block(block_index)) {
        match inf.target {
            InflationTarget::FirstPointwise => kt_reduce = inf.temporal_kernel,
            InflationTarget::AllSpatial => kt_spatial = inf.temporal_kernel,
            InflationTarget::Stem => {}
        }
    }
    let mut convs = vec![
        ConvGeometry {
            role: BottleneckRole::Reduce,
            c_in,
            c_out: width,
            kernel: [kt_reduce, 1, 1],
            stride: [1, 1, 1],
            padding: [kt_reduce / 2, 0, 0],
        },
        ConvGeometry {
            role: BottleneckRole::Spatial,
            c_in: width,
            c_out: width,
            kernel: [kt_spatial, layer.kernel[1], layer.kernel[2]],
            stride: layer.stride,
            padding: [kt_spatial / 2, layer.padding[1], layer.padding[2]],
        },
        ConvGeometry {
            role: BottleneckRole::Expand,
            c_in: width,
            c_out,
            kernel: [1, 1, 1],
            stride: [1, 1, 1],
            padding: [0, 0, 0],
        },
    ];
    if c_in != c_out || layer.stride != [1, 1, 1] {
        convs.push(ConvGeometry {
            role: BottleneckRole::Shortcut,
            c_in,
            c_out,
            kernel: [1, 1, 1],
            stride: layer.stride,
            padding: [0, 0, 0],
        });
    }
    Some(convs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bottleneck_expansion() {
        let block = LayerSpec::bottleneck(256, [1, 1, 1], None);
        let convs = bottleneck_convs(&block, 0, 64).unwrap();
        assert_eq!(convs.len(), 4);
        assert_eq!(convs[0].c_out, 64);
        assert_eq!(convs[3].role, BottleneckRole::Shortcut);
        let convs = bottleneck_convs(&block, 1, 256).unwrap();
        assert_eq!(convs.len(), 3);
    }

    #[test]
    fn every_other_inflation() {
        let inf = InflationSpec {
            target: InflationTarget::FirstPointwise,
            temporal_kernel: 3,
            apply_to: InflationScope::EveryOtherBlock,
        };
        let block = LayerSpec::bottleneck(256, [1, 1, 1], Some(inf));
        assert_eq!(bottleneck_convs(&block, 0, 256).unwrap()[0].kernel, [3, 1, 1]);
        assert_eq!(bottleneck_convs(&block, 1, 256).unwrap()[0].kernel, [1, 1, 1]);
        assert_eq!(bottleneck_convs(&block, 2, 256).unwrap()[0].padding, [1, 0, 0]);
    }
}
