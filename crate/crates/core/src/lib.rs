//! Tabular data imputation with a bipartite sample/feature graph and an
//! iteratively reconstructed network of similar samples.
//!
//! The crate is `no_std` (it needs `alloc`) and holds every algorithmic piece:
//! a small reverse-mode autodiff tape, dataset scaling and missingness
//! simulation, graph construction and friend-network initialisers, the
//! imputation model with its training loop, the Mean/KNN baselines and the
//! evaluation metrics. File formats, the CLI and experiment orchestration
//! live in the `impute` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod baselines;
pub mod data;
mod error;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod numerics;

pub use error::{Error, Result};
