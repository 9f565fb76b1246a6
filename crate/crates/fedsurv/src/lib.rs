//! Federated survival analysis over heterogeneous multi-center cohorts.
//!
//! The crate provides a from-scratch Cox proportional hazards estimator
//! (partial likelihood with Breslow ties, analytic derivatives,
//! Newton-Raphson, Breslow baseline hazard, Harrell's concordance index),
//! feature-presence clustering by Hamming k-means, federated aggregation
//! strategies (common-feature averaging, presence-clustered component-wise
//! averaging, a loss-driven iterative clustering baseline, event-based
//! reporting), a synthetic cohort generator, and the CSV/config plumbing
//! behind the `fedsurv` CLI.
//!
//! Per-center work (local fits, concordance evaluation, k-means restarts,
//! experiment repetitions) runs data-parallel under the default `parallel`
//! feature and falls back to sequential iteration without it. Results are
//! identical either way: all reductions happen in fixed center order.

pub mod cluster;
pub mod datagen;
mod error;
pub(crate) mod exec;
pub mod federation;
pub mod io;
pub(crate) mod linalg;
pub mod survival;

pub use error::{Error, Result};
