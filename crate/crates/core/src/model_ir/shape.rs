use std::fmt;

use serde::{Deserialize, Serialize};

use super::IrError;

/// Extent of a 5-D activation laid out as `[N, T, C, H, W]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape5D {
    pub n: usize,
    pub t: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape5D {
    pub fn new(n: usize, t: usize, c: usize, h: usize, w: usize) -> Result<Self, IrError> {
        let shape = Self { n, t, c, h, w };
        if shape.dims().contains(&0) {
            return Err(IrError::NonPositiveShape(shape));
        }
        Ok(shape)
    }

    pub fn dims(&self) -> [usize; 5] {
        [self.n, self.t, self.c, self.h, self.w]
    }

    pub fn numel(&self) -> usize {
        self.n * self.t * self.c * self.h * self.w
    }

    /// Elements of one clip (`T·C·H·W`).
    pub fn clip_numel(&self) -> usize {
        self.t * self.c * self.h * self.w
    }

    pub fn with_n(self, n: usize) -> Self {
        Self { n, ..self }
    }

    pub fn is_positive(&self) -> bool {
        self.dims().iter().all(|&d| d > 0)
    }
}

impl fmt::Display for Shape5D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}, {}]", self.n, self.t, self.c, self.h, self.w)
    }
}

/// Per-clip input extent as stored in an architecture (batch left open).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipShape {
    pub t: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl ClipShape {
    pub fn to_shape(self, n: usize) -> Shape5D {
        Shape5D { n, t: self.t, c: self.c, h: self.h, w: self.w }
    }

    pub fn numel(&self) -> usize {
        self.t * self.c * self.h * self.w
    }

    pub fn matches(&self, shape: &Shape5D) -> bool {
        self.t == shape.t && self.c == shape.c && self.h == shape.h && self.w == shape.w
    }
}

/// Output length of a sliding window along one axis, `None` if the window
/// does not fit even once.
pub fn window_out(len: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = len + 2 * pad;
    if stride == 0 || kernel == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}
