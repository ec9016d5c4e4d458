//! Moving horizon state estimation for linear time-invariant systems whose
//! matrices are unknown.
//!
//! The estimator is learned from offline input–output segments that each
//! carry one noisy sample of their initial state
//! ([`offline::collect_offline`]). [`estimators::fit_ddmhe`] turns such a
//! dataset into a recursive estimator; [`estimators::fit_mbmhe`] builds the
//! model-based counterpart when the plant is known. [`analysis`] holds the
//! finite-sample constants, error-bound calculators and Monte Carlo checks.

pub mod analysis;
pub mod error;
pub mod estimators;
pub mod lti;
pub mod numerics;
pub mod offline;
pub mod textio;

pub use error::{Error, Result};
pub use lti::{LtiSystem, NoiseKind, NoiseSpec, Trajectory};
pub use offline::{CollectionMode, CollectionPlan, OfflineDataset};
