//! Direct (loop-nest) convolution over `[N, T, C, H, W]` tensors.

use rand::Rng;

use super::{KernelError, MacTally, Tensor5D};
use crate::model_ir::{window_out, LayerKind, LayerSpec, Shape5D, Triple};

/// Weights `(C_out, C_in, kt, kh, kw)` plus one bias per output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights {
    pub c_out: usize,
    pub c_in: usize,
    pub kernel: Triple,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvWeights {
    pub fn zeros(c_out: usize, c_in: usize, kernel: Triple) -> Self {
        let len = c_out * c_in * kernel.iter().product::<usize>();
        Self { c_out, c_in, kernel, weights: vec![0.0; len], bias: vec![0.0; c_out] }
    }

    /// Uniform in `±1/sqrt(fan_in)` for weights and biases.
    pub fn random<R: Rng + ?Sized>(c_out: usize, c_in: usize, kernel: Triple, rng: &mut R) -> Self {
        let mut w = Self::zeros(c_out, c_in, kernel);
        let bound = 1.0 / ((c_in * kernel.iter().product::<usize>()) as f64).sqrt();
        w.weights.iter_mut().chain(w.bias.iter_mut()).for_each(|v| *v = rng.gen_range(-bound..bound));
        w
    }

    #[inline]
    pub fn offset(&self, co: usize, ci: usize, kt: usize, kh: usize, kw: usize) -> usize {
        let [_, khs, kws] = self.kernel;
        (((co * self.c_in + ci) * self.kernel[0] + kt) * khs + kh) * kws + kw
    }

    pub fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Weights then biases, as one flat vector.
    pub fn flatten(&self) -> Vec<f64> {
        self.weights.iter().chain(&self.bias).copied().collect()
    }

    pub fn get_flat(&self, i: usize) -> f64 {
        if i < self.weights.len() { self.weights[i] } else { self.bias[i - self.weights.len()] }
    }

    pub fn set_flat(&mut self, i: usize, v: f64) {
        let n = self.weights.len();
        if i < n { self.weights[i] = v } else { self.bias[i - n] = v }
    }
}

/// Stride and padding of a convolution window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub stride: Triple,
    pub padding: Triple,
}

impl Window {
    pub fn of(layer: &LayerSpec) -> Self {
        Self { stride: layer.stride, padding: layer.padding }
    }

    pub fn unit() -> Self {
        Self { stride: [1, 1, 1], padding: [0, 0, 0] }
    }

    pub fn output_shape(&self, input: Shape5D, kernel: Triple, c_out: usize) -> Result<Shape5D, KernelError> {
        let axis = |i: usize, len| {
            window_out(len, kernel[i], self.stride[i], self.padding[i])
                .ok_or_else(|| KernelError::Shape(format!("kernel {kernel:?} does not fit input {input}")))
        };
        Ok(Shape5D { n: input.n, t: axis(0, input.t)?, c: c_out, h: axis(1, input.h)?, w: axis(2, input.w)? })
    }
}

fn check_weights(x: &Tensor5D, w: &ConvWeights) -> Result<(), KernelError> {
    if x.shape().c != w.c_in {
        return Err(KernelError::Shape(format!("input has {} channels, weights expect {}", x.shape().c, w.c_in)));
    }
    Ok(())
}

#[inline]
fn tap(base: usize, k: usize, stride: usize, pad: usize, len: usize) -> Option<usize> {
    (base * stride + k).checked_sub(pad).filter(|&i| i < len)
}

/// 3-D convolution; `tally` is ticked once per multiply-accumulate slot,
/// padding taps included.
pub fn conv3d_forward_tallied<T: MacTally>(
    x: &Tensor5D,
    w: &ConvWeights,
    win: Window,
    tally: &mut T,
) -> Result<Tensor5D, KernelError> {
    check_weights(x, w)?;
    let s = x.shape();
    let os = win.output_shape(s, w.kernel, w.c_out)?;
    let [kt, kh, kw] = w.kernel;
    let [st, sh, sw] = win.stride;
    let [pt, ph, pw] = win.padding;
    let mut out = Tensor5D::zeros(os);
    for n in 0..s.n {
        for co in 0..w.c_out {
            for to in 0..os.t {
                for ho in 0..os.h {
                    for wo in 0..os.w {
                        let mut acc = w.bias[co];
                        for ci in 0..w.c_in {
                            for dt in 0..kt {
                                for dh in 0..kh {
                                    for dw in 0..kw {
                                        tally.tick();
                                        let (Some(ti), Some(hi), Some(wi)) =
                                            (tap(to, dt, st, pt, s.t), tap(ho, dh, sh, ph, s.h), tap(wo, dw, sw, pw, s.w))
                                        else {
                                            continue;
                                        };
                                        acc += w.weights[w.offset(co, ci, dt, dh, dw)] * x.at(n, ti, ci, hi, wi);
                                    }
                                }
                            }
                        }
                        *out.at_mut(n, to, co, ho, wo) = acc;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// 2-D convolution applied to every frame independently.
pub fn conv2d_frames_forward_tallied<T: MacTally>(
    x: &Tensor5D,
    w: &ConvWeights,
    win: Window,
    tally: &mut T,
) -> Result<Tensor5D, KernelError> {
    check_weights(x, w)?;
    if w.kernel[0] != 1 || win.stride[0] != 1 || win.padding[0] != 0 {
        return Err(KernelError::Shape("frame-wise convolution needs kt = st = 1, pt = 0".into()));
    }
    let s = x.shape();
    let os = win.output_shape(s, w.kernel, w.c_out)?;
    let [_, kh, kw] = w.kernel;
    let [_, sh, sw] = win.stride;
    let [_, ph, pw] = win.padding;
    let mut out = Tensor5D::zeros(os);
    for n in 0..s.n {
        for t in 0..s.t {
            for co in 0..w.c_out {
                for ho in 0..os.h {
                    for wo in 0..os.w {
                        let mut acc = w.bias[co];
                        for ci in 0..w.c_in {
                            for dh in 0..kh {
                                for dw in 0..kw {
                                    tally.tick();
                                    let (Some(hi), Some(wi)) = (tap(ho, dh, sh, ph, s.h), tap(wo, dw, sw, pw, s.w))
                                    else {
                                        continue;
                                    };
                                    acc += w.weights[w.offset(co, ci, 0, dh, dw)] * x.at(n, t, ci, hi, wi);
                                }
                            }
                        }
                        *out.at_mut(n, t, co, ho, wo) = acc;
                    }
                }
            }
        }
    }
    Ok(out)
}

fn conv_layer_check(layer: &LayerSpec, w: &ConvWeights) -> Result<(), KernelError> {
    if !layer.kind.is_conv() {
        return Err(KernelError::Shape(format!("{:?} is not a convolution", layer.kind)));
    }
    if w.kernel != layer.kernel || w.c_out != layer.channels_out {
        return Err(KernelError::Shape(format!(
            "weights ({}, {}, {:?}) do not match layer kernel {:?} with {} outputs",
            w.c_out, w.c_in, w.kernel, layer.kernel, layer.channels_out
        )));
    }
    Ok(())
}

/// Forward pass of a `Conv2D` (frame-wise) or `Conv3D` layer.
pub fn conv_forward(x: &Tensor5D, w: &ConvWeights, layer: &LayerSpec) -> Result<Tensor5D, KernelError> {
    conv_layer_check(layer, w)?;
    match layer.kind {
        LayerKind::Conv2D => conv2d_frames_forward_tallied(x, w, Window::of(layer), &mut ()),
        _ => conv3d_forward_tallied(x, w, Window::of(layer), &mut ()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: Tensor5D,
    pub weights: ConvWeights,
}

/// Gradients of `<conv(x, w), grad_out>` with respect to `x` and `w`.
pub fn conv3d_backward(x: &Tensor5D, w: &ConvWeights, grad_out: &Tensor5D, win: Window) -> Result<ConvGrads, KernelError> {
    check_weights(x, w)?;
    let s = x.shape();
    let os = win.output_shape(s, w.kernel, w.c_out)?;
    grad_out.expect_shape("conv gradient", os)?;
    let [kt, kh, kw] = w.kernel;
    let [st, sh, sw] = win.stride;
    let [pt, ph, pw] = win.padding;
    let mut gx = Tensor5D::zeros(s);
    let mut gw = ConvWeights::zeros(w.c_out, w.c_in, w.kernel);
    for n in 0..s.n {
        for co in 0..w.c_out {
            for to in 0..os.t {
                for ho in 0..os.h {
                    for wo in 0..os.w {
                        let g = grad_out.at(n, to, co, ho, wo);
                        gw.bias[co] += g;
                        for ci in 0..w.c_in {
                            for dt in 0..kt {
                                for dh in 0..kh {
                                    for dw in 0..kw {
                                        let (Some(ti), Some(hi), Some(wi)) =
                                            (tap(to, dt, st, pt, s.t), tap(ho, dh, sh, ph, s.h), tap(wo, dw, sw, pw, s.w))
                                        else {
                                            continue;
                                        };
                                        let k = w.offset(co, ci, dt, dh, dw);
                                        gw.weights[k] += g * x.at(n, ti, ci, hi, wi);
                                        *gx.at_mut(n, ti, ci, hi, wi) += g * w.weights[k];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(ConvGrads { input: gx, weights: gw })
}

/// Backward pass of a `Conv2D` or `Conv3D` layer. A frame-wise 2-D
/// convolution is a 3-D convolution with a unit temporal window, so both
/// share one adjoint.
pub fn conv_backward(
    x: &Tensor5D,
    w: &ConvWeights,
    grad_out: &Tensor5D,
    layer: &LayerSpec,
) -> Result<ConvGrads, KernelError> {
    conv_layer_check(layer, w)?;
    conv3d_backward(x, w, grad_out, Window::of(layer))
}
