//! Batch front end: scenario files, Monte Carlo experiments and CSV output.

pub mod config;
pub mod experiment;

pub use config::{ConfigError, Method, Scenario, ScenarioConfig};
pub use experiment::{run_sweep, run_trace, sweep, trace, SweepRow, TraceTable, SWEEP_HEADER, TRACE_HEADER};
