//! Data valuation for federated learning.
//!
//! The crate simulates FedAvg training, records every round so that any
//! coalition of a round's participants can be re-evaluated without
//! retraining, and values participants with the federated Shapley value
//! (exact, permutation sampling, group testing) or federated leave-one-out.
//!
//! Enumeration and Monte Carlo loops run on rayon when the `parallel`
//! feature is enabled (default). Results are identical with and without it:
//! every random task draws from its own counter-derived stream and all
//! reductions happen in index order.

pub mod config;
pub mod data;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod fl;
pub mod manifest;
pub mod par;
pub mod seed;
pub mod valuation;

pub use error::{Error, Result};
pub use valuation::{Coalition, CoalitionSequence, ParticipantId, UtilityOracle, ValuationReport, ValueVector};
