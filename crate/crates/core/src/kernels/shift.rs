//! Temporal shift: moves a slice of channels one step along `T`.
//!
//! Channels `[0, F)` take the previous frame's values and channels
//! `[F, F + B)` the next frame's, where `F = fraction_fwd · C` and
//! `B = fraction_bwd · C`. The rest pass through. The operator has no
//! weights and performs no arithmetic.

use serde::{Deserialize, Serialize};

use super::{KernelError, Tensor5D};
use crate::model_ir::Fraction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// Values shifted past the clip edge are dropped; vacated slots are 0.
    #[default]
    ZeroFill,
    /// Values wrap around the clip.
    Circular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftConfig {
    pub fraction_fwd: Fraction,
    pub fraction_bwd: Fraction,
    pub boundary: Boundary,
}

impl ShiftConfig {
    /// The same fraction in both directions, zero-filled.
    pub fn symmetric(fraction: Fraction) -> Self {
        Self { fraction_fwd: fraction, fraction_bwd: fraction, boundary: Boundary::ZeroFill }
    }

    pub fn none() -> Self {
        Self::symmetric(Fraction::ZERO)
    }

    /// Channel counts `(F, B)` for a tensor with `channels` channels.
    pub fn split(&self, channels: usize) -> Result<(usize, usize), KernelError> {
        let whole = |f: Fraction| {
            f.whole_part_of(channels).ok_or(KernelError::NonIntegralSplit { fraction: f.to_string(), channels })
        };
        let (fwd, bwd) = (whole(self.fraction_fwd)?, whole(self.fraction_bwd)?);
        if fwd + bwd > channels {
            return Err(KernelError::InvalidConfig(format!(
                "shift fractions {} + {} exceed 1",
                self.fraction_fwd, self.fraction_bwd
            )));
        }
        Ok((fwd, bwd))
    }
}

impl Default for ShiftConfig {
    fn default() -> Self {
        Self::symmetric(Fraction::new(1, 8).unwrap())
    }
}

/// `out[t] = x[t + offset]` on the channel range, boundary-filled.
fn gather(x: &Tensor5D, out: &mut Tensor5D, channels: std::ops::Range<usize>, offset: isize, boundary: Boundary) {
    let s = x.shape();
    let frames = s.t as isize;
    for n in 0..s.n {
        for t in 0..s.t {
            let src = t as isize + offset;
            let src = match boundary {
                _ if (0..frames).contains(&src) => Some(src as usize),
                Boundary::ZeroFill => None,
                Boundary::Circular => Some(src.rem_euclid(frames) as usize),
            };
            for c in channels.clone() {
                for h in 0..s.h {
                    for w in 0..s.w {
                        *out.at_mut(n, t, c, h, w) = src.map_or(0.0, |st| x.at(n, st, c, h, w));
                    }
                }
            }
        }
    }
}

fn apply(x: &Tensor5D, cfg: &ShiftConfig, fwd_offset: isize) -> Result<Tensor5D, KernelError> {
    let (fwd, bwd) = cfg.split(x.shape().c)?;
    let mut out = x.clone();
    gather(x, &mut out, 0..fwd, fwd_offset, cfg.boundary);
    gather(x, &mut out, fwd..fwd + bwd, -fwd_offset, cfg.boundary);
    Ok(out)
}

pub fn temporal_shift(x: &Tensor5D, cfg: &ShiftConfig) -> Result<Tensor5D, KernelError> {
    apply(x, cfg, -1)
}

/// Exact adjoint of [`temporal_shift`]: each channel group moves the
/// opposite way and is zero-filled at the opposite edge.
pub fn temporal_shift_adjoint(g: &Tensor5D, cfg: &ShiftConfig) -> Result<Tensor5D, KernelError> {
    apply(g, cfg, 1)
}
