//! Algorithms for deploying and migrating service chains on hierarchical
//! edge-cloud networks.
//!
//! The library models a tree of datacenters (cloud root down to antenna-level
//! edge nodes), service chains of virtual machines with M/M/1 processing
//! delays, and the joint placement / CPU-allocation problem under per-chain
//! delay targets:
//!
//! - [`topology`]: fat-tree network model and a rectangle-partition builder.
//! - [`service`]: chain specifications and delay evaluation.
//! - [`allocation`]: gradient CPU allocation (GFA) and per-chain feasible sets.
//! - [`cost`]: migration, computation, and bandwidth cost model.
//! - [`placement`]: bottom-up placement (BU) under resource augmentation,
//!   with a counting certificate emitted on failure.
//! - [`pushup`]: cost push-up pass (PU) and the BUPU decision orchestrator.
//! - [`baselines`]: First-Fit and CPVNF heuristics, an exhaustive oracle,
//!   and an LP-relaxation exporter.

pub mod allocation;
pub mod baselines;
pub mod cost;
pub mod error;
pub mod placement;
pub mod pushup;
pub mod service;
pub mod topology;

pub use error::Error;

/// Absolute tolerance, in seconds, for floating-point delay comparisons.
///
/// A delay `a` is considered to exceed `b` only when `a - b > DELAY_TOL`.
pub const DELAY_TOL: f64 = 1e-12;

/// Returns true when delay `a` strictly exceeds delay `b` beyond [`DELAY_TOL`].
#[inline]
pub fn delay_exceeds(a: f64, b: f64) -> bool {
    a - b > DELAY_TOL
}
