//! Delight-gated policy gradients.
//!
//! The gated estimator multiplies each REINFORCE term `U * grad log pi(a)` by
//! `sigmoid(U * l / eta)`, where `l = -log pi(a)` is the surprisal of the
//! sampled action. This crate provides
//!
//! - [`gate`]: surprisal, delight, gate, softplus potential and the estimator
//!   variants used in ablations;
//! - [`tabular`]: exact enumeration and simulation for a single-context
//!   K-armed bandit;
//! - [`multictx`]: exact population directions for many independent contexts;
//! - [`neural`]: an MLP softmax policy trained as a contextual bandit;
//! - [`data`]: IDX readers/writers and a synthetic cluster generator;
//! - [`verify`]: the executable property suite behind `delight verify`.
//!
//! Multi-seed runs fan out over rayon when the `parallel` feature is enabled.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod continuous;
pub mod data;
pub mod error;
pub mod gate;
pub mod multictx;
pub mod neural;
pub mod par;
pub mod rng;
pub mod stats;
pub mod tabular;
pub mod vecops;
pub mod verify;

pub use error::{Error, Result};
pub use gate::{EstimatorKind, GateParams, SampleTerm};
