use rand::Rng;

use super::KernelError;
use crate::model_ir::Shape5D;

/// Dense `[N][T][C][H][W]` tensor of `f64`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor5D {
    shape: Shape5D,
    data: Vec<f64>,
}

impl Tensor5D {
    pub fn zeros(shape: Shape5D) -> Self {
        Self { shape, data: vec![0.0; shape.numel()] }
    }

    pub fn filled(shape: Shape5D, value: f64) -> Self {
        Self { shape, data: vec![value; shape.numel()] }
    }

    pub fn from_vec(shape: Shape5D, data: Vec<f64>) -> Result<Self, KernelError> {
        if !shape.is_positive() {
            return Err(KernelError::Shape(format!("shape {shape} has a zero dimension")));
        }
        if data.len() != shape.numel() {
            return Err(KernelError::Shape(format!(
                "{} values supplied for shape {shape} ({} expected)",
                data.len(),
                shape.numel()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(KernelError::NonFinite("tensor data".into()));
        }
        Ok(Self { shape, data })
    }

    /// Uniform values in `[-1, 1)`.
    pub fn random<R: Rng + ?Sized>(shape: Shape5D, rng: &mut R) -> Self {
        let data = (0..shape.numel()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape5D {
        self.shape
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn offset(&self, n: usize, t: usize, c: usize, h: usize, w: usize) -> usize {
        let s = &self.shape;
        (((n * s.t + t) * s.c + c) * s.h + h) * s.w + w
    }

    #[inline]
    pub fn at(&self, n: usize, t: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.offset(n, t, c, h, w)]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, t: usize, c: usize, h: usize, w: usize) -> &mut f64 {
        let o = self.offset(n, t, c, h, w);
        &mut self.data[o]
    }

    pub fn dot(&self, other: &Tensor5D) -> f64 {
        assert_eq!(self.shape, other.shape, "dot of mismatched tensors");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// `alpha·self + beta·other`.
    pub fn lincomb(&self, alpha: f64, other: &Tensor5D, beta: f64) -> Tensor5D {
        assert_eq!(self.shape, other.shape, "lincomb of mismatched tensors");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| alpha * a + beta * b).collect();
        Tensor5D { shape: self.shape, data }
    }

    pub fn add_assign(&mut self, other: &Tensor5D) {
        assert_eq!(self.shape, other.shape, "add of mismatched tensors");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn max_abs_diff(&self, other: &Tensor5D) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn expect_shape(&self, what: &str, shape: Shape5D) -> Result<(), KernelError> {
        if self.shape != shape {
            return Err(KernelError::Shape(format!("{what}: expected {shape}, got {}", self.shape)));
        }
        Ok(())
    }
}
