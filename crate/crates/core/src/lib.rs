//! Sufficient dimension reduction by sliced inverse regression, with
//! diagonal-thresholding screening for high-dimensional designs.
//!
//! The crate provides:
//!
//! - [`slicing`]: response-ordered slice plans, within-slice means, and the
//!   per-coordinate screening statistic.
//! - [`sir`]: the slice-mean outer-product estimator, its top eigenspace,
//!   and the classical central-space estimate.
//! - [`covariance`]: sample covariance, banding, random-split bandwidth
//!   selection, and guarded SPD inversion.
//! - [`dtsir`]: the screening pipeline (threshold, screen, restricted SIR,
//!   zero-fill embedding, inverse covariance).
//! - [`metrics`]: projection matrices, subspace distances, vector angles.
//! - [`simgen`]: seeded generators for the benchmark settings and the
//!   linear phase-transition model.
//! - [`experiments`]: replicated runners for distance tables, phase
//!   studies and timing grids, plus the Welch comparison test.
//!
//! All estimators are pure functions of their inputs; randomness enters
//! only through explicit seeds or caller-supplied RNGs, and replication
//! streams are derived from (seed, cell, rep), never from scheduling order.

pub mod covariance;
pub mod dtsir;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod metrics;
pub mod simgen;
pub mod sir;
pub mod slicing;

pub use error::{Error, Result};
