//! The experiment suite. Each experiment returns typed rows and renders them
//! into a [`Report`].

pub mod accounting;
pub mod correctness;
pub mod detection;
pub mod recovery;
pub mod scalability;

use rayon::prelude::*;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::report::Report;
use crate::HarnessError;

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    cfg.validate()?;
    Ok(match cfg.experiment {
        ExperimentKind::Correctness => correctness::run(cfg)?.report(),
        ExperimentKind::Detection => detection::run(cfg)?.report(),
        ExperimentKind::Scalability => scalability::run(cfg)?.report(),
        ExperimentKind::Recovery => recovery::run(cfg)?.report(),
        ExperimentKind::Accounting => accounting::run(cfg)?.report(),
    })
}

/// Runs `f` over `0..count`, in parallel when asked. Results keep index order.
pub(crate) fn map_trials<T, F>(parallel: bool, count: u64, f: F) -> Result<Vec<T>, HarnessError>
where
    T: Send,
    F: Fn(u64) -> Result<T, HarnessError> + Sync + Send,
{
    if parallel {
        (0..count).into_par_iter().map(f).collect()
    } else {
        (0..count).map(f).collect()
    }
}

pub(crate) fn fmt_party(p: Option<cppdd_core::protocol::Party>) -> String {
    p.map_or_else(|| "none".to_owned(), |p| p.to_string())
}
