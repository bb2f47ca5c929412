//! Scalability analysis toolkit for video CNNs.
//!
//! - [`model_ir`]: architectures as data and 5-D shape propagation
//! - [`cost`]: FLOPs, parameters, input traffic and Compute/IO
//! - [`kernels`]: double-precision reference kernels (temporal shift,
//!   convolution, pooling, fully-connected) with exact backward passes
//! - [`sim`]: step-time and scalability model for synchronous data-parallel training
//! - [`cli`]: the `vidscale` command line

pub mod model_ir;
pub mod cost;
pub mod kernels;
pub mod sim;
pub mod cli;
