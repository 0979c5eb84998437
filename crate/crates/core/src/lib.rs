//! Sparse Koopman (EDMD) model identification with spike-and-slab variational
//! Bayes, and dictionary reduction through the graph of posterior inclusion
//! probabilities.
//!
//! The pipeline: build a [`dictionary::Dictionary`] of observables, assemble
//! the design matrix, fit every target regression with [`vb::fit_all`],
//! threshold the inclusion matrix into a directed graph and keep only the
//! observables that can reach an output ([`graphred::reduce_dictionary`]).
//! [`baselines`] holds the least-squares, thresholded least-squares and
//! sparse Bayesian learning comparison methods, [`koopman`] the lifted linear
//! predictor, and [`harness`] the Monte-Carlo experiment driver.

pub mod baselines;
pub mod cli;
pub mod data;
pub mod dictionary;
pub mod error;
pub mod graphred;
pub mod harness;
pub mod koopman;
pub mod matrix;
pub mod rng;
pub mod systems;
pub mod vb;

pub use error::{Error, Result};
