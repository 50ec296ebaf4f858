//! Experiment harness: configuration, evaluation against simulator truth,
//! and replicate running with JSON-lines and CSV output.

pub mod config;
pub mod eval;
pub mod experiment;

pub use config::{EnvMode, EnvSpec, ExperimentConfig, OutputPaths};
pub use eval::{audit_trace, evaluate_dynamics, evaluate_encoder, TraceAudit};
pub use experiment::{run_experiment, run_replicate, ExperimentRecord, Summary};
