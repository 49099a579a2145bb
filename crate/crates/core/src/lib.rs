//! Multimodal risk-class laboratory over precomputed text/image embeddings.
//!
//! The crate is organised bottom-up:
//!
//! * [`numcore`]: dense matrices, activations, a portable seeded RNG and a
//!   finite-difference gradient oracle.
//! * [`dataio`]: corpus CSV I/O, standardization, PCA, Gaussian perturbation
//!   and the complementary-modalities synthetic generator.
//! * [`fusion`]: the cross-modal transformer classifier with analytic
//!   gradients and a versioned binary model format.
//! * [`train`]: losses, optimizers, schedules, oversampling, augmentation and
//!   the early-stopping training loop.
//! * [`baselines`]: logistic regression, RBF kernel SVM with Platt scaling,
//!   random forest and a stacking combiner.
//! * [`selftrain`]: ensemble consistency-filtered pseudo-labelling and the
//!   stacking-teacher variant.
//! * [`eval`]: stratified k-fold, metrics, cross-validation with leakage
//!   guards and the image-noise ablation.
//! * [`cli`]: the `fusionlab` command-line front end.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod cli;
pub mod dataio;
pub mod error;
pub mod eval;
mod fsutil;
pub mod fusion;
pub mod numcore;
pub mod selftrain;
pub mod train;

pub use error::{Error, Result};

/// Number of risk classes handled by every model in the crate.
pub const N_CLASSES: usize = 3;
