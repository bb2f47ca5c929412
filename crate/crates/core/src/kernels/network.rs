//! Runs an [`ArchSpec`] end to end on the reference kernels.
//!
//! Top-level convolutions and the classifier are linear; each bottleneck
//! computes `act(conv_c(act(conv_b(act(conv_a(x))))) + shortcut(x))` with
//! the network's activation. Batch norm is not modelled.

use rand::Rng;

use super::conv::{conv3d_backward, conv3d_forward_tallied, conv_backward, ConvWeights, Window};
use super::dense::{fc_backward, fc_forward_tallied, relu_backward, relu_forward};
use super::pool::{pool_backward, pool_forward, MaxPoolOutput};
use super::shift::{temporal_shift, temporal_shift_adjoint, ShiftConfig};
use super::{KernelError, MacTally, Tensor5D};
use crate::model_ir::layer::{bottleneck_convs, ConvGeometry};
use crate::model_ir::{trace_layers, validate, ArchSpec, IrError, LayerKind, LayerSpec, Shape5D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    fn forward(self, x: &Tensor5D) -> Tensor5D {
        match self {
            Activation::Relu => relu_forward(x),
            Activation::Identity => x.clone(),
        }
    }

    fn backward(self, pre: &Tensor5D, g: Tensor5D) -> Result<Tensor5D, KernelError> {
        match self {
            Activation::Relu => relu_backward(pre, &g),
            Activation::Identity => Ok(g),
        }
    }
}

#[derive(Debug, Clone)]
struct BlockConv {
    geom: ConvGeometry,
    param: usize,
}

#[derive(Debug, Clone)]
enum Op {
    Conv { layer: LayerSpec, param: usize },
    Shift(ShiftConfig),
    Pool(LayerSpec),
    Fc { param: usize },
    Block { convs: Vec<BlockConv> },
}

/// Saved forward state for one op.
#[derive(Debug, Clone)]
pub struct OpCache(CacheKind);

// Caches live one per op in a Vec; boxing the block variant saves nothing.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone)]
enum CacheKind {
    Input(Tensor5D),
    Shift,
    Pool { input_shape: Shape5D, routing: MaxPoolOutput },
    Block { input: Tensor5D, pre: [Tensor5D; 3], act: [Tensor5D; 2] },
}

impl OpCache {
    /// Appends which side of every non-differentiable point this op landed
    /// on: rectifier signs and max-pool winners.
    fn push_pattern(&self, activation: Activation, out: &mut Vec<u32>) {
        match &self.0 {
            CacheKind::Pool { routing, .. } => out.extend(routing.argmax.iter().map(|&i| i as u32)),
            CacheKind::Block { pre, .. } if activation == Activation::Relu => {
                for p in pre {
                    out.extend(p.as_slice().iter().map(|&v| u32::from(v > 0.0)));
                }
            }
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub input: Tensor5D,
    pub params: Vec<ConvWeights>,
}

#[derive(Debug, Clone)]
pub struct Network {
    arch: ArchSpec,
    ops: Vec<Op>,
    params: Vec<ConvWeights>,
    activation: Activation,
}

impl Network {
    /// Builds the network and draws every parameter tensor from `rng` in
    /// layer order. Shift layers draw nothing.
    pub fn new<R: Rng + ?Sized>(arch: &ArchSpec, rng: &mut R) -> Result<Self, KernelError> {
        let violations = validate(arch);
        if !violations.is_empty() {
            return Err(IrError::Invalid(violations).into());
        }
        let mut ops = Vec::new();
        let mut params = Vec::new();
        for tr in trace_layers(arch, arch.input_shape())? {
            let layer = tr.layer;
            let op = match layer.kind {
                LayerKind::Conv2D | LayerKind::Conv3D => {
                    params.push(ConvWeights::random(layer.channels_out, tr.input.c, layer.kernel, rng));
                    Op::Conv { layer: layer.clone(), param: params.len() - 1 }
                }
                LayerKind::TemporalShift => {
                    Op::Shift(ShiftConfig::symmetric(layer.shift_fraction.unwrap_or_default()))
                }
                LayerKind::MaxPoolSpatial | LayerKind::MaxPoolTemporal | LayerKind::AvgPoolGlobal => {
                    Op::Pool(layer.clone())
                }
                LayerKind::FullyConnected => {
                    params.push(ConvWeights::random(layer.channels_out, tr.input.c, [1, 1, 1], rng));
                    Op::Fc { param: params.len() - 1 }
                }
                LayerKind::ResBlockBottleneck => {
                    let geoms = bottleneck_convs(layer, tr.block_index.unwrap_or(0), tr.input.c)
                        .expect("validated bottleneck");
                    let convs = geoms
                        .into_iter()
                        .map(|geom| {
                            params.push(ConvWeights::random(geom.c_out, geom.c_in, geom.kernel, rng));
                            BlockConv { geom, param: params.len() - 1 }
                        })
                        .collect();
                    Op::Block { convs }
                }
            };
            ops.push(op);
        }
        Ok(Self { arch: arch.clone(), ops, params, activation: Activation::default() })
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    pub fn params(&self) -> &[ConvWeights] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [ConvWeights] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(ConvWeights::len).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params.iter().flat_map(ConvWeights::flatten).collect()
    }

    fn check_input(&self, x: &Tensor5D) -> Result<(), KernelError> {
        if !self.arch.input.matches(&x.shape()) {
            return Err(KernelError::Shape(format!(
                "input {} does not match architecture input {:?}",
                x.shape(),
                self.arch.input
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor5D) -> Result<(Tensor5D, Vec<OpCache>), KernelError> {
        self.forward_tallied(x, &mut ())
    }

    /// Forward pass that also ticks `tally` for every multiply-accumulate.
    pub fn forward_tallied<T: MacTally>(&self, x: &Tensor5D, tally: &mut T) -> Result<(Tensor5D, Vec<OpCache>), KernelError> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.ops.len());
        let mut cur = x.clone();
        for op in &self.ops {
            let (next, cache) = match op {
                Op::Conv { layer, param } => {
                    let w = &self.params[*param];
                    let y = match layer.kind {
                        LayerKind::Conv2D => super::conv::conv2d_frames_forward_tallied(&cur, w, Window::of(layer), tally)?,
                        _ => conv3d_forward_tallied(&cur, w, Window::of(layer), tally)?,
                    };
                    (y, CacheKind::Input(cur))
                }
                Op::Shift(cfg) => (temporal_shift(&cur, cfg)?, CacheKind::Shift),
                Op::Pool(layer) => {
                    let routing = pool_forward(&cur, layer)?;
                    let y = routing.output.clone();
                    (y, CacheKind::Pool { input_shape: cur.shape(), routing })
                }
                Op::Fc { param } => (fc_forward_tallied(&cur, &self.params[*param], tally)?, CacheKind::Input(cur)),
                Op::Block { convs } => self.block_forward(convs, cur, tally)?,
            };
            if !next.is_finite() {
                return Err(KernelError::NonFinite("forward activation".into()));
            }
            caches.push(OpCache(cache));
            cur = next;
        }
        Ok((cur, caches))
    }

    fn block_conv<T: MacTally>(&self, c: &BlockConv, x: &Tensor5D, tally: &mut T) -> Result<Tensor5D, KernelError> {
        let win = Window { stride: c.geom.stride, padding: c.geom.padding };
        conv3d_forward_tallied(x, &self.params[c.param], win, tally)
    }

    fn block_forward<T: MacTally>(
        &self,
        convs: &[BlockConv],
        x: Tensor5D,
        tally: &mut T,
    ) -> Result<(Tensor5D, CacheKind), KernelError> {
        let act = self.activation;
        let a_pre = self.block_conv(&convs[0], &x, tally)?;
        let a = act.forward(&a_pre);
        let b_pre = self.block_conv(&convs[1], &a, tally)?;
        let b = act.forward(&b_pre);
        let mut sum = self.block_conv(&convs[2], &b, tally)?;
        match convs.get(3) {
            Some(sc) => sum.add_assign(&self.block_conv(sc, &x, tally)?),
            None => sum.add_assign(&x),
        }
        let out = act.forward(&sum);
        Ok((out, CacheKind::Block { input: x, pre: [a_pre, b_pre, sum], act: [a, b] }))
    }

    /// Branch pattern of a forward pass. Two inputs with equal patterns lie
    /// in the same linear piece of every rectifier and max-pool.
    pub fn kink_pattern(&self, caches: &[OpCache]) -> Vec<u32> {
        let mut out = Vec::new();
        for c in caches {
            c.push_pattern(self.activation, &mut out);
        }
        out
    }

    /// Back-propagates `grad_out` (gradient of a scalar loss with respect to
    /// the network output) through the cached forward pass.
    pub fn backward(&self, caches: &[OpCache], grad_out: Tensor5D) -> Result<Gradients, KernelError> {
        if caches.len() != self.ops.len() {
            return Err(KernelError::Shape("cache does not belong to this network".into()));
        }
        let mut grads: Vec<ConvWeights> =
            self.params.iter().map(|p| ConvWeights::zeros(p.c_out, p.c_in, p.kernel)).collect();
        let mut g = grad_out;
        for (op, OpCache(cache)) in self.ops.iter().zip(caches).rev() {
            g = match (op, cache) {
                (Op::Conv { layer, param }, CacheKind::Input(x)) => {
                    let cg = conv_backward(x, &self.params[*param], &g, layer)?;
                    accumulate(&mut grads[*param], &cg.weights);
                    cg.input
                }
                (Op::Shift(cfg), CacheKind::Shift) => temporal_shift_adjoint(&g, cfg)?,
                (Op::Pool(layer), CacheKind::Pool { input_shape, routing }) => {
                    pool_backward(&g, routing, *input_shape, layer)?
                }
                (Op::Fc { param }, CacheKind::Input(x)) => {
                    let (gx, gw) = fc_backward(x, &self.params[*param], &g)?;
                    accumulate(&mut grads[*param], &gw);
                    gx
                }
                (Op::Block { convs }, CacheKind::Block { input, pre, act }) => {
                    self.block_backward(convs, input, pre, act, g, &mut grads)?
                }
                _ => return Err(KernelError::Shape("cache does not belong to this network".into())),
            };
        }
        Ok(Gradients { input: g, params: grads })
    }

    fn block_backward(
        &self,
        convs: &[BlockConv],
        input: &Tensor5D,
        pre: &[Tensor5D; 3],
        act: &[Tensor5D; 2],
        g: Tensor5D,
        grads: &mut [ConvWeights],
    ) -> Result<Tensor5D, KernelError> {
        let a = self.activation;
        let back = |c: &BlockConv, x: &Tensor5D, g: &Tensor5D, grads: &mut [ConvWeights]| {
            let win = Window { stride: c.geom.stride, padding: c.geom.padding };
            let cg = conv3d_backward(x, &self.params[c.param], g, win)?;
            accumulate(&mut grads[c.param], &cg.weights);
            Ok::<_, KernelError>(cg.input)
        };
        let g_sum = a.backward(&pre[2], g)?;
        let g_b = a.backward(&pre[1], back(&convs[2], &act[1], &g_sum, grads)?)?;
        let g_a = a.backward(&pre[0], back(&convs[1], &act[0], &g_b, grads)?)?;
        let mut g_x = back(&convs[0], input, &g_a, grads)?;
        match convs.get(3) {
            Some(sc) => g_x.add_assign(&back(sc, input, &g_sum, grads)?),
            None => g_x.add_assign(&g_sum),
        }
        Ok(g_x)
    }
}

fn accumulate(into: &mut ConvWeights, from: &ConvWeights) {
    into.weights.iter_mut().zip(&from.weights).for_each(|(a, b)| *a += b);
    into.bias.iter_mut().zip(&from.bias).for_each(|(a, b)| *a += b);
}
