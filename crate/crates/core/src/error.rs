//! Error type shared across the library.

use crate::topology::DcId;

/// Errors surfaced by topology construction, delay evaluation, and the
/// placement algorithms.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An antenna lies outside the configured service area.
    #[error("antenna {poa_id} at ({x}, {y}) lies outside the service area")]
    AntennaOutsideArea { poa_id: u64, x: f64, y: f64 },

    /// The builder was given no antennas.
    #[error("topology requires at least one antenna")]
    NoAntennas,

    /// Degenerate service area or invalid tree shape parameter.
    #[error("invalid topology parameter: {0}")]
    InvalidTopology(String),

    /// A datacenter id that does not exist in the tree.
    #[error("unknown datacenter id {0}")]
    UnknownDatacenter(DcId),

    /// A chain specification failed validation.
    #[error("invalid chain spec: {0}")]
    InvalidChain(String),

    /// A VM was probed with an allocation at or below its load, where the
    /// M/M/1 delay is infinite.
    #[error("allocation {mu} does not exceed load {theta_lambda}; delay is infinite")]
    InfiniteDelay { mu: u32, theta_lambda: f64 },

    /// The probed datacenter is not on the chain's PoA-to-root path.
    #[error("datacenter {dc} is not on the path from PoA {poa} to the root")]
    OffPath { dc: DcId, poa: DcId },

    /// A CPU budget below the finiteness threshold of the chain.
    #[error("budget {budget} is below the finiteness threshold {threshold}")]
    BudgetBelowThreshold { budget: u64, threshold: u64 },

    /// No chain has any delay-feasible datacenter.
    #[error("no feasible (chain, datacenter) pair in the input")]
    NoFeasiblePair,

    /// An augmentation factor that could not be parsed or is below one.
    #[error("invalid augmentation factor: {0}")]
    InvalidAugmentation(String),

    /// Standing chains occupy more than a datacenter's augmented capacity.
    #[error("standing usage on datacenter {dc} exceeds its augmented capacity")]
    StandingExceedsCapacity { dc: DcId },

    /// The exhaustive search space exceeds the configured guard.
    #[error("search space of {size} assignments exceeds the guard {limit}")]
    SearchSpaceExceeded { size: u128, limit: u128 },

    /// I/O failure while exporting a model or dump.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
