//! TERELU: a thresholded exponential rectified linear unit, its gradients,
//! the comparison activations, and a small dense-network workbench for
//! studying how they behave in deep fully-connected training.
//!
//! The crate is organized bottom-up:
//!
//! - [`numerics`]: dense row-major matrices and seeded randomness.
//! - [`activations`]: scalar forward/derivative definitions, including
//!   TERELU's trainable-`beta` gradient.
//! - [`layers`]: dense, batch-norm, activation, and maxout layers with
//!   manual backward passes.
//! - [`network`]: model assembly, softmax cross-entropy, SGD with momentum.
//! - [`data`]: IDX (MNIST) ingestion, stratified subsets, batching, and
//!   synthetic blob datasets for fast tests.
//! - [`gradcheck`]: the central-difference oracle every gradient test uses.
//! - [`cli`]: experiment configuration and the CSV/config file formats
//!   behind the `terelu` binary.
//!
//! Determinism is a design constraint throughout: a fixed seed reproduces
//! initialization, shuffling, and therefore the entire metrics CSV byte for
//! byte on a given platform.

pub mod activations;
pub mod cli;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod network;
pub mod numerics;

pub use activations::{ActivationSpec, TereluParams};
pub use error::Error;
pub use numerics::{Matrix, Rng};
