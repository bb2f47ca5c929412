use super::conv::ConvWeights;
use super::{KernelError, MacTally, Tensor5D};
use crate::model_ir::Shape5D;

fn check_pooled(x: &Tensor5D, w: &ConvWeights) -> Result<(), KernelError> {
    let s = x.shape();
    if (s.t, s.h, s.w) != (1, 1, 1) {
        return Err(KernelError::Shape(format!("fully-connected input must be pooled to [N, 1, C, 1, 1], got {s}")));
    }
    if s.c != w.c_in || w.kernel != [1, 1, 1] {
        return Err(KernelError::Shape(format!("fully-connected weights expect {} inputs, got {}", w.c_in, s.c)));
    }
    Ok(())
}

/// `y[n, k] = b[k] + sum_c W[k, c] · x[n, c]` on a pooled `[N, 1, C, 1, 1]` input.
pub fn fc_forward_tallied<T: MacTally>(x: &Tensor5D, w: &ConvWeights, tally: &mut T) -> Result<Tensor5D, KernelError> {
    check_pooled(x, w)?;
    let n_batch = x.shape().n;
    let mut out = Tensor5D::zeros(Shape5D { n: n_batch, t: 1, c: w.c_out, h: 1, w: 1 });
    for n in 0..n_batch {
        for k in 0..w.c_out {
            let mut acc = w.bias[k];
            for c in 0..w.c_in {
                tally.tick();
                acc += w.weights[k * w.c_in + c] * x.at(n, 0, c, 0, 0);
            }
            *out.at_mut(n, 0, k, 0, 0) = acc;
        }
    }
    Ok(out)
}

pub fn fc_forward(x: &Tensor5D, w: &ConvWeights) -> Result<Tensor5D, KernelError> {
    fc_forward_tallied(x, w, &mut ())
}

pub fn fc_backward(x: &Tensor5D, w: &ConvWeights, grad_out: &Tensor5D) -> Result<(Tensor5D, ConvWeights), KernelError> {
    check_pooled(x, w)?;
    let n_batch = x.shape().n;
    grad_out.expect_shape("fc gradient", Shape5D { n: n_batch, t: 1, c: w.c_out, h: 1, w: 1 })?;
    let mut gx = Tensor5D::zeros(x.shape());
    let mut gw = ConvWeights::zeros(w.c_out, w.c_in, [1, 1, 1]);
    for n in 0..n_batch {
        for k in 0..w.c_out {
            let g = grad_out.at(n, 0, k, 0, 0);
            gw.bias[k] += g;
            for c in 0..w.c_in {
                gw.weights[k * w.c_in + c] += g * x.at(n, 0, c, 0, 0);
                *gx.at_mut(n, 0, c, 0, 0) += g * w.weights[k * w.c_in + c];
            }
        }
    }
    Ok((gx, gw))
}

pub fn relu_forward(x: &Tensor5D) -> Tensor5D {
    let data = x.as_slice().iter().map(|&v| v.max(0.0)).collect();
    Tensor5D::from_vec(x.shape(), data).expect("same shape")
}

/// Passes the gradient where the pre-activation was positive.
pub fn relu_backward(pre: &Tensor5D, grad_out: &Tensor5D) -> Result<Tensor5D, KernelError> {
    grad_out.expect_shape("relu gradient", pre.shape())?;
    let data = pre.as_slice().iter().zip(grad_out.as_slice()).map(|(&p, &g)| if p > 0.0 { g } else { 0.0 }).collect();
    Tensor5D::from_vec(pre.shape(), data)
}
