//! Error type for configuration, trace I/O, and the simulation harness.

/// Errors surfaced by the simulator on top of the core library's own.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A scenario file or flag value that fails validation.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Scenario TOML that does not parse.
    #[error("cannot parse scenario file: {0}")]
    Toml(#[from] toml::de::Error),

    /// A malformed trace or antenna CSV row.
    #[error("bad input row {line}: {reason}")]
    BadRow { line: u64, reason: String },

    /// Trace events that are not sorted by time.
    #[error("trace events out of order at line {line}: {prev} then {next}")]
    UnsortedTrace { line: u64, prev: f64, next: f64 },

    /// A position outside the configured service area.
    #[error("position ({x}, {y}) is outside the service area")]
    OutsideArea { x: f64, y: f64 },

    /// The capacity sweep hit its upper bound without finding feasibility.
    #[error("no feasible capacity at or below {limit} base units")]
    SweepExhausted { limit: u64 },

    /// An error from the placement library.
    #[error(transparent)]
    Core(#[from] chainplace_core::Error),

    /// CSV encoding or decoding failure.
    #[error(transparent)]
    Csv(#[from] csv::Error),

    /// Filesystem failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
