//! Expected information gain (EIG) estimation for Bayesian experimental
//! design, and its KL-robust post-processing (REIG).
//!
//! The crate is `no_std` with `alloc`. It contains the experiment models,
//! nested and neural EIG estimators, importance proposals, the one-dimensional
//! dual solves that turn per-θ divergence estimates into robust values, and
//! closed-form/brute-force references used to validate them.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod models;
pub mod estimators;
pub mod numeric;
pub mod optim;
pub mod oracle;
pub mod proposals;
pub mod rng;
pub mod robust;
pub mod solver;

pub use error::{Error, Result};
