//! Independent loop-nest oracles shared by the kernel suites. Indices are
//! computed with signed arithmetic, separately from the library's helpers.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use vidscale::kernels::{ConvWeights, Tensor5D};
use vidscale::model_ir::{LayerSpec, Shape5D};

pub fn shape(n: usize, t: usize, c: usize, h: usize, w: usize) -> Shape5D {
    Shape5D::new(n, t, c, h, w).unwrap()
}

// Flat row-major index, computed independently of Tensor5D::offset.
pub fn idx(s: Shape5D, n: usize, t: usize, c: usize, h: usize, w: usize) -> usize {
    (((n * s.t + t) * s.c + c) * s.h + h) * s.w + w
}

pub fn oracle_conv(x: &Tensor5D, w: &ConvWeights, stride: [usize; 3], pad: [usize; 3]) -> Vec<f64> {
    let s = x.shape();
    let xs = x.as_slice();
    let out_len = |len: usize, k: usize, st: usize, p: usize| (len + 2 * p - k) / st + 1;
    let (ot, oh, ow) = (
        out_len(s.t, w.kernel[0], stride[0], pad[0]),
        out_len(s.h, w.kernel[1], stride[1], pad[1]),
        out_len(s.w, w.kernel[2], stride[2], pad[2]),
    );
    let mut out = Vec::new();
    for n in 0..s.n {
        for co in 0..w.c_out {
            for to in 0..ot {
                for ho in 0..oh {
                    for wo in 0..ow {
                        let mut acc = w.bias[co];
                        for ci in 0..w.c_in {
                            for a in 0..w.kernel[0] {
                                for b in 0..w.kernel[1] {
                                    for c in 0..w.kernel[2] {
                                        let ti = (to * stride[0] + a) as i64 - pad[0] as i64;
                                        let hi = (ho * stride[1] + b) as i64 - pad[1] as i64;
                                        let wi = (wo * stride[2] + c) as i64 - pad[2] as i64;
                                        if ti < 0 || hi < 0 || wi < 0 || ti >= s.t as i64 || hi >= s.h as i64 || wi >= s.w as i64 {
                                            continue;
                                        }
                                        let wk = (((co * w.c_in + ci) * w.kernel[0] + a) * w.kernel[1] + b) * w.kernel[2] + c;
                                        acc += w.weights[wk] * xs[idx(s, n, ti as usize, ci, hi as usize, wi as usize)];
                                    }
                                }
                            }
                        }
                        out.push(acc);
                    }
                }
            }
        }
    }
    // The loops above emit [n, co, t, h, w]; transpose to [n, t, co, h, w].
    let mut y = vec![0.0; out.len()];
    let os = shape(s.n, ot, w.c_out, oh, ow);
    let mut k = 0;
    for n in 0..s.n {
        for co in 0..w.c_out {
            for t in 0..ot {
                for h in 0..oh {
                    for ww in 0..ow {
                        y[idx(os, n, t, co, h, ww)] = out[k];
                        k += 1;
                    }
                }
            }
        }
    }
    y
}

pub fn oracle_max_pool(x: &Tensor5D, k: [usize; 3], stride: [usize; 3], pad: [usize; 3]) -> Vec<f64> {
    let s = x.shape();
    let out_len = |len: usize, k: usize, st: usize, p: usize| (len + 2 * p - k) / st + 1;
    let (ot, oh, ow) = (out_len(s.t, k[0], stride[0], pad[0]), out_len(s.h, k[1], stride[1], pad[1]), out_len(s.w, k[2], stride[2], pad[2]));
    let mut y = Vec::new();
    for n in 0..s.n {
        for to in 0..ot {
            for c in 0..s.c {
                for ho in 0..oh {
                    for wo in 0..ow {
                        let mut m = f64::NEG_INFINITY;
                        for a in 0..k[0] {
                            for b in 0..k[1] {
                                for d in 0..k[2] {
                                    let ti = (to * stride[0] + a) as i64 - pad[0] as i64;
                                    let hi = (ho * stride[1] + b) as i64 - pad[1] as i64;
                                    let wi = (wo * stride[2] + d) as i64 - pad[2] as i64;
                                    if ti < 0 || hi < 0 || wi < 0 || ti >= s.t as i64 || hi >= s.h as i64 || wi >= s.w as i64 {
                                        continue;
                                    }
                                    m = m.max(x.as_slice()[idx(s, n, ti as usize, c, hi as usize, wi as usize)]);
                                }
                            }
                        }
                        y.push(m);
                    }
                }
            }
        }
    }
    y
}

pub fn oracle_fc(x: &Tensor5D, w: &ConvWeights) -> Vec<f64> {
    let s = x.shape();
    let mut y = Vec::new();
    for n in 0..s.n {
        for k in 0..w.c_out {
            let dot: f64 = (0..w.c_in).map(|c| w.weights[k * w.c_in + c] * x.as_slice()[n * s.c + c]).sum();
            y.push(w.bias[k] + dot);
        }
    }
    y
}

pub fn max_abs_diff(got: &[f64], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    got.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

pub fn random_conv_case(rng: &mut ChaCha8Rng) -> (Tensor5D, ConvWeights, LayerSpec) {
    let kt = [1, 3][rng.gen_range(0..2)];
    let kh = [1, 3][rng.gen_range(0..2)];
    let st = rng.gen_range(1..=2);
    let sh = rng.gen_range(1..=2);
    let pt = if kt == 3 { rng.gen_range(0..=1) } else { 0 };
    let ph = if kh == 3 { rng.gen_range(0..=1) } else { 0 };
    let x = Tensor5D::random(
        shape(rng.gen_range(1..=2), rng.gen_range(3..=5), rng.gen_range(1..=3), rng.gen_range(3..=6), rng.gen_range(3..=6)),
        rng,
    );
    let c_out = rng.gen_range(1..=3);
    let layer = LayerSpec::conv3d(c_out, [kt, kh, kh], [st, sh, sh], [pt, ph, ph]);
    let w = ConvWeights::random(c_out, x.shape().c, layer.kernel, rng);
    (x, w, layer)
}
