//! Dynamic author-persona topic model.
//!
//! Authors are soft-clustered into personas; each persona carries a topic
//! trajectory that drifts over discrete time steps as Brownian motion.
//! Training is variational EM with an optional penalty on the inner
//! products between persona trajectories, which pushes personas apart.
//!
//! The crate is organised bottom-up:
//!
//! - [`corpus`]: ingestion, vocabulary, time discretisation, splits, file format
//! - [`model`]: hyperparameters, global parameters, softmax, initialisation
//! - [`sampler`]: forward sampling of the generative process
//! - [`inference`]: per-document coordinate ascent and sufficient statistics
//! - [`alpha`]: variational observations for the persona trajectories
//! - [`kalman`]: forward filter and backward smoother over those observations
//! - [`train`]: global updates and the EM driver
//! - [`elbo`], [`eval`], [`report`]: bound assembly, held-out scoring, persona analyses

pub mod alpha;
pub mod checkpoint;
pub mod corpus;
pub mod elbo;
pub mod error;
pub mod eval;
pub mod inference;
pub mod kalman;
pub mod linalg;
pub mod model;
pub mod report;
pub mod rng;
pub mod sampler;
pub mod special;
pub mod train;

pub use error::{DapError, Result};
