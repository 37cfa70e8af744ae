//! Variational folding autoencoder for disk-topology point clouds.
//!
//! The crate is organised bottom-up:
//!
//! - [`pointcloud`]: the sample type, XYZ/PLY ingestion, normalization,
//!   subsampling, synthetic height-field patches and hole simulation.
//! - [`metrics`]: Chamfer, paired Euclidean, exact EMD and the set-level
//!   generative scores (MMD, COV, 1-NNA).
//! - [`diffcore`]: a small reverse-mode substrate for per-point MLPs with
//!   set max-pooling, plus finite-difference gradient checking.
//! - [`model`]: encoder, point projector, folding decoder, variance network,
//!   affine-coupling flow prior and the grid predictor.
//! - [`objective`]: Student-t likelihood, ELBO, KL warm-up, Adamax, the
//!   phased trainer and checkpoint persistence.
//! - [`generation`]: sampling, mesh extraction, shape completion, latent
//!   interpolation/directions and the linear probe.
//!
//! Set metrics and batch gradients run data-parallel under the default
//! `parallel` feature. Reductions always happen in a fixed order, so results
//! are bit-identical with or without it.

pub mod diffcore;
pub mod error;
pub mod generation;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod par;
pub mod pointcloud;

pub use error::{Error, Result};
pub use pointcloud::{Point3, PointCloud};
