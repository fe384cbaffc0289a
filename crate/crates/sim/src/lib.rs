//! Simulation harness for chain placement on hierarchical edge networks:
//! scenario configuration, vehicle mobility traces, the periodic decision
//! loop, and CSV metrics output.

pub mod error;
pub mod harness;
pub mod metrics;
pub mod mobility;
pub mod scenario;
pub mod trace;

pub use error::{Error, Result};
pub use harness::{
    assign_poa, detect_critical, initial_chains, run, run_scenario, run_seeds, sweep_capacity,
    AlgoChoice, RunResult, SweepResult,
};
pub use metrics::{write_decisions, write_summary, DecisionRecord, RunSummary};
pub use mobility::{synth_mobility, trace_events};
pub use scenario::ScenarioConfig;
pub use trace::{read_trace, read_trace_file, write_trace, write_trace_file, EventKind, TraceEvent};
