//! Double-precision reference kernels with exact backward passes.
//!
//! Everything here is a plain loop nest with a fixed reduction order, so
//! results are bit-reproducible. These are oracles, not fast kernels.

pub mod conv;
pub mod dense;
pub mod fixture;
pub mod gradcheck;
pub mod network;
pub mod pool;
pub mod shift;
mod tensor;

pub use conv::{conv_backward, conv_forward, ConvGrads, ConvWeights, Window};
pub use dense::{fc_backward, fc_forward, relu_backward, relu_forward};
pub use gradcheck::{gradcheck, GradCheckReport};
pub use network::{Activation, Gradients, Network};
pub use pool::{global_avg_pool_backward, global_avg_pool_forward, max_pool_backward, max_pool_forward, pool_forward};
pub use shift::{temporal_shift, temporal_shift_adjoint, Boundary, ShiftConfig};
pub use tensor::Tensor5D;

use crate::model_ir::IrError;

#[derive(Debug, thiserror::Error)]
pub enum KernelError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("shift fraction {fraction} of {channels} channels is not a whole channel count")]
    NonIntegralSplit { fraction: String, channels: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("malformed tensor fixture: {0}")]
    Format(String),
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Counts multiply-accumulate slots inside the convolution loops.
pub trait MacTally {
    fn tick(&mut self);
}

impl MacTally for () {
    #[inline(always)]
    fn tick(&mut self) {}
}

impl MacTally for u64 {
    #[inline(always)]
    fn tick(&mut self) {
        *self += 1;
    }
}
