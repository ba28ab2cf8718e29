//! Verification laboratory for the measure of maximal entropy of
//! finite-horizon dispersing billiards on the unit two-torus.
//!
//! The crate has two halves that meet in [`stats`]:
//!
//! * a billiard half: [`table`] (scatterer layout, horizon certification),
//!   [`map`] (the collision map, its derivative and cones), [`curves`]
//!   (unstable-curve evolution and leaf counting) and [`entropy`]
//!   (growth-rate, sparse-recurrence and complexity estimators);
//! * a symbolic half: [`renewal`] (the countable-state renewal shift with
//!   its closed-form max-entropy Markov measure), [`operator`] (the
//!   truncated renewal operator and its counting identities) and [`stats`]
//!   (seed-deterministic Monte Carlo: correlations, CLT checks, entropy
//!   along sample paths).
//!
//! Everything statistical is deterministic given a seed and independent of
//! the worker-thread count; see [`exec`] for the chunking contract.

/// Crate version, recorded in run manifests by downstream tooling.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod curves;
pub mod entropy;
pub mod exec;
pub mod map;
pub mod numeric;
pub mod operator;
pub mod renewal;
pub mod stats;
pub mod table;
