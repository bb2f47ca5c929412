use super::conv::Window;
use super::{KernelError, Tensor5D};
use crate::model_ir::{LayerKind, LayerSpec, Shape5D, Triple};

/// Max pooling output plus, for every output element, the flat offset of
/// the input element that won. Ties go to the first element in scan order.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxPoolOutput {
    pub output: Tensor5D,
    pub argmax: Vec<usize>,
}

pub fn max_pool_forward(x: &Tensor5D, kernel: Triple, win: Window) -> Result<MaxPoolOutput, KernelError> {
    let s = x.shape();
    let os = win.output_shape(s, kernel, s.c)?;
    let mut out = Tensor5D::zeros(os);
    let mut argmax = vec![0; os.numel()];
    for n in 0..s.n {
        for c in 0..s.c {
            for to in 0..os.t {
                for ho in 0..os.h {
                    for wo in 0..os.w {
                        let mut best: Option<(f64, usize)> = None;
                        for dt in 0..kernel[0] {
                            for dh in 0..kernel[1] {
                                for dw in 0..kernel[2] {
                                    let ti = (to * win.stride[0] + dt).checked_sub(win.padding[0]).filter(|&i| i < s.t);
                                    let hi = (ho * win.stride[1] + dh).checked_sub(win.padding[1]).filter(|&i| i < s.h);
                                    let wi = (wo * win.stride[2] + dw).checked_sub(win.padding[2]).filter(|&i| i < s.w);
                                    let (Some(ti), Some(hi), Some(wi)) = (ti, hi, wi) else { continue };
                                    let v = x.at(n, ti, c, hi, wi);
                                    if best.is_none_or(|(b, _)| v > b) {
                                        best = Some((v, x.offset(n, ti, c, hi, wi)));
                                    }
                                }
                            }
                        }
                        let (v, src) = best.ok_or_else(|| {
                            KernelError::Shape(format!("pooling window at ({to}, {ho}, {wo}) covers only padding"))
                        })?;
                        let o = out.offset(n, to, c, ho, wo);
                        out.as_mut_slice()[o] = v;
                        argmax[o] = src;
                    }
                }
            }
        }
    }
    Ok(MaxPoolOutput { output: out, argmax })
}

/// Routes each output gradient to its winning input element.
pub fn max_pool_backward(grad_out: &Tensor5D, argmax: &[usize], input_shape: Shape5D) -> Result<Tensor5D, KernelError> {
    if argmax.len() != grad_out.shape().numel() {
        return Err(KernelError::Shape("argmax does not match gradient".into()));
    }
    let mut gx = Tensor5D::zeros(input_shape);
    for (g, &src) in grad_out.as_slice().iter().zip(argmax) {
        gx.as_mut_slice()[src] += g;
    }
    Ok(gx)
}

/// Mean over `(T, H, W)`, one value per channel.
pub fn global_avg_pool_forward(x: &Tensor5D) -> Tensor5D {
    let s = x.shape();
    let inv = 1.0 / (s.t * s.h * s.w) as f64;
    let mut out = Tensor5D::zeros(Shape5D { t: 1, h: 1, w: 1, ..s });
    for n in 0..s.n {
        for c in 0..s.c {
            let mut acc = 0.0;
            for t in 0..s.t {
                for h in 0..s.h {
                    for w in 0..s.w {
                        acc += x.at(n, t, c, h, w);
                    }
                }
            }
            *out.at_mut(n, 0, c, 0, 0) = acc * inv;
        }
    }
    out
}

pub fn global_avg_pool_backward(grad_out: &Tensor5D, input_shape: Shape5D) -> Result<Tensor5D, KernelError> {
    grad_out.expect_shape("global pool gradient", Shape5D { t: 1, h: 1, w: 1, ..input_shape })?;
    let s = input_shape;
    let inv = 1.0 / (s.t * s.h * s.w) as f64;
    let mut gx = Tensor5D::zeros(s);
    for n in 0..s.n {
        for c in 0..s.c {
            let g = grad_out.at(n, 0, c, 0, 0) * inv;
            for t in 0..s.t {
                for h in 0..s.h {
                    for w in 0..s.w {
                        *gx.at_mut(n, t, c, h, w) = g;
                    }
                }
            }
        }
    }
    Ok(gx)
}

/// Forward pass of any pooling layer. Max pooling returns its routing
/// table; global average pooling returns an empty one.
pub fn pool_forward(x: &Tensor5D, layer: &LayerSpec) -> Result<MaxPoolOutput, KernelError> {
    match layer.kind {
        LayerKind::MaxPoolSpatial | LayerKind::MaxPoolTemporal => max_pool_forward(x, layer.kernel, Window::of(layer)),
        LayerKind::AvgPoolGlobal => Ok(MaxPoolOutput { output: global_avg_pool_forward(x), argmax: Vec::new() }),
        kind => Err(KernelError::Shape(format!("{kind:?} is not a pooling layer"))),
    }
}

pub fn pool_backward(
    grad_out: &Tensor5D,
    routing: &MaxPoolOutput,
    input_shape: Shape5D,
    layer: &LayerSpec,
) -> Result<Tensor5D, KernelError> {
    match layer.kind {
        LayerKind::MaxPoolSpatial | LayerKind::MaxPoolTemporal => max_pool_backward(grad_out, &routing.argmax, input_shape),
        LayerKind::AvgPoolGlobal => global_avg_pool_backward(grad_out, input_shape),
        kind => Err(KernelError::Shape(format!("{kind:?} is not a pooling layer"))),
    }
}
