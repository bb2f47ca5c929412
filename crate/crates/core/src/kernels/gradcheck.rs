//! Central finite-difference check of [`Network::backward`].
//!
//! Rectifiers and max-pools make the loss piecewise smooth. A difference
//! stencil whose two probes land in a different linear piece than the base
//! point measures a secant across the kink rather than the derivative; such
//! coordinates are counted in `skipped_kinks` and left out of the error.

use serde::Serialize;

use super::network::{Gradients, Network};
use super::{KernelError, Tensor5D};

/// Largest number of scalars (parameters plus input elements) a check
/// will perturb.
pub const MAX_CHECKED_SCALARS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Coordinate {
    Param { tensor: usize, index: usize },
    Input { index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub loss: f64,
    pub eps: f64,
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_abs_error: f64,
    /// `max |analytic - numeric| / max(|analytic|, |numeric|, 1)`.
    pub max_rel_error: f64,
    pub worst: Option<Coordinate>,
}

/// Sum of squared network outputs and its gradients.
pub fn loss_and_grad(net: &Network, x: &Tensor5D) -> Result<(f64, Gradients), KernelError> {
    let (y, caches) = net.forward(x)?;
    let loss = y.sum_sq();
    let grad_y = y.lincomb(2.0, &y, 0.0);
    Ok((loss, net.backward(&caches, grad_y)?))
}

fn probe(net: &Network, x: &Tensor5D) -> Result<(f64, Vec<u32>), KernelError> {
    let (y, caches) = net.forward(x)?;
    let l = y.sum_sq();
    if !l.is_finite() {
        return Err(KernelError::NonFinite("loss".into()));
    }
    Ok((l, net.kink_pattern(&caches)))
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

struct Tracker<'a> {
    report: GradCheckReport,
    base_pattern: &'a [u32],
}

impl Tracker<'_> {
    fn record(&mut self, analytic: f64, up: (f64, Vec<u32>), down: (f64, Vec<u32>), at: Coordinate) {
        if up.1 != self.base_pattern || down.1 != self.base_pattern {
            self.report.skipped_kinks += 1;
            return;
        }
        let numeric = (up.0 - down.0) / (2.0 * self.report.eps);
        let r = &mut self.report;
        r.checked += 1;
        r.max_abs_error = r.max_abs_error.max((analytic - numeric).abs());
        let rel = rel_error(analytic, numeric);
        if rel > r.max_rel_error || r.worst.is_none() {
            r.max_rel_error = r.max_rel_error.max(rel);
            r.worst = Some(at);
        }
    }
}

/// Compares analytic parameter and input gradients of the sum-of-squares
/// loss against `(L(θ + eps) - L(θ - eps)) / 2 eps` for every scalar.
pub fn gradcheck(net: &Network, x: &Tensor5D, eps: f64) -> Result<GradCheckReport, KernelError> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(KernelError::InvalidConfig(format!("finite-difference step must be positive, got {eps}")));
    }
    let total = net.param_count() + x.shape().numel();
    if total > MAX_CHECKED_SCALARS {
        return Err(KernelError::InvalidConfig(format!(
            "{total} scalars exceed the gradient-check limit of {MAX_CHECKED_SCALARS}"
        )));
    }
    let (l0, grads) = loss_and_grad(net, x)?;
    if !l0.is_finite() {
        return Err(KernelError::NonFinite("loss".into()));
    }
    let (_, base_pattern) = probe(net, x)?;
    let mut tr = Tracker {
        report: GradCheckReport {
            loss: l0,
            eps,
            checked: 0,
            skipped_kinks: 0,
            max_abs_error: 0.0,
            max_rel_error: 0.0,
            worst: None,
        },
        base_pattern: &base_pattern,
    };

    let mut moved = net.clone();
    for tensor in 0..net.params().len() {
        for index in 0..net.params()[tensor].len() {
            let orig = net.params()[tensor].get_flat(index);
            moved.params_mut()[tensor].set_flat(index, orig + eps);
            let up = probe(&moved, x)?;
            moved.params_mut()[tensor].set_flat(index, orig - eps);
            let down = probe(&moved, x)?;
            moved.params_mut()[tensor].set_flat(index, orig);
            tr.record(grads.params[tensor].get_flat(index), up, down, Coordinate::Param { tensor, index });
        }
    }

    let mut xp = x.clone();
    for index in 0..x.shape().numel() {
        let orig = x.as_slice()[index];
        xp.as_mut_slice()[index] = orig + eps;
        let up = probe(net, &xp)?;
        xp.as_mut_slice()[index] = orig - eps;
        let down = probe(net, &xp)?;
        xp.as_mut_slice()[index] = orig;
        tr.record(grads.input.as_slice()[index], up, down, Coordinate::Input { index });
    }
    Ok(tr.report)
}
