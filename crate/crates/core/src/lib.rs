//! Scale- and rotation-equivariant convolution.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensorcore`]: feature maps, similarity transforms, bilinear sampling,
//!   image warping and the `SRTN` tensor file format.
//! - [`fourier_argand`]: the log-polar steerable basis, coefficient analysis
//!   and steering.
//! - [`geometry`]: normalized basis responses and the per-pixel scale /
//!   orientation field obtained by grid search.
//! - [`simconv`]: the similarity convolution and its analytic gradients.
//! - [`network`]: blocks, the classifier stack, training and evaluation.
//! - [`equivariance`]: the verification harness.
//! - [`data`]: IDX ingestion, distorted test sets and synthetic patterns.

pub mod data;
pub mod equivariance;
mod error;
pub mod fourier_argand;
pub mod geometry;
pub mod network;
pub mod rng;
pub mod simconv;
pub mod tensorcore;

pub use error::{Error, Result};
pub use tensorcore::{FeatureMap, Sim2Transform};
