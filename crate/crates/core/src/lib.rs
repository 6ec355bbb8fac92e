//! Conditional indoor-scene layout generation with a graph variational
//! autoencoder whose prior is a learned autoregressive linear-Gaussian model.
//!
//! The crate is organized bottom-up:
//!
//! - [`scene`]: attributed scene graphs, feature engineering, corpus I/O and
//!   a synthetic corpus generator.
//! - [`lap`]: exact linear assignment.
//! - [`gaussian`]: diagonal posteriors, the autoregressive prior, joint
//!   assembly, sampling, densities and analytic KL.
//! - [`matcher`]: KL-optimal ordering of latent node sets as a quadratic
//!   assignment problem, solved with Frank-Wolfe (FAQ).
//! - [`autodiff`]: a small reverse-mode tape over dense matrices.
//! - [`mpgnn`]: typed attention message passing and the encoder, decoder,
//!   room aggregator and recurrent prior built on it.
//! - [`training`]: ELBO, constraint functionals and primal-dual training.
//! - [`pipeline`]: synthesis, retrieval, editing, recommendation, metrics
//!   and SVG rendering.

pub mod autodiff;
pub mod error;
pub mod gaussian;
pub mod lap;
pub mod matcher;
pub mod mpgnn;
pub mod pipeline;
pub mod scene;
pub mod training;

pub use error::{Error, Result};
