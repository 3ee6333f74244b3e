//! Experiment driver for the cppdd protocol simulator.
//!
//! An [`ExperimentConfig`] names one of five experiments and the shapes to
//! sweep. [`run_experiment`] returns a [`Report`] of CSV tables and pass/fail
//! checks, which the `cppdd` binary writes to disk.

pub mod config;
pub mod experiments;
pub mod instance;
pub mod payloads;
pub mod report;
pub mod stats;

use thiserror::Error;

pub use config::{ConfigError, ExperimentConfig, ExperimentKind, PayloadSource};
pub use experiments::run_experiment;
pub use payloads::{load_payloads, IngestError, Payloads};
pub use report::{Check, Report, Table};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("setup failed: {0}")]
    Setup(#[from] cppdd_core::coordinator::SetupError),
    #[error(transparent)]
    Protocol(#[from] cppdd_core::protocol::ProtocolError),
    #[error(transparent)]
    Field(#[from] cppdd_core::field::FieldError),
    #[error("invalid fault plan: {0}")]
    Plan(#[from] cppdd_core::simnet::PlanError),
    #[error(transparent)]
    Client(#[from] cppdd_core::client::ClientError),
}
