//! Graph classification with multi-level attention pooling (MLAP).
//!
//! The crate contains everything needed to train and analyse GIN-based
//! graph classifiers with three readout families:
//!
//! * **naive**: attention pooling over the last layer only;
//! * **JK**: jumping-knowledge aggregation of node representations
//!   (sum / concatenation / max) followed by one attention pooling;
//! * **MLAP**: one attention pooling per layer, with the layer-wise graph
//!   representations combined by a sum or a learned weighted sum.
//!
//! It is built on a small reverse-mode autodiff engine ([`autodiff`]) over
//! dense `f64` matrices. Data-parallel loops (matrix row blocks, seed sweeps,
//! batched evaluation, probe suites) go through [`par`], which uses rayon
//! when the `parallel` feature is enabled and falls back to sequential
//! iteration otherwise.

pub mod analysis;
pub mod autodiff;
pub mod config;
pub mod error;
pub mod graph;
pub mod layers;
pub mod model;
pub mod par;
pub mod readout;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
