//! Wall-clock cost of honest runs as N grows.

use std::time::Duration;

use cppdd_core::coordinator::SetupMode;
use cppdd_core::simnet::{FaultPlan, Simulation};
use serde::Serialize;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::instance::{build_instance, trial_seed};
use crate::report::{Check, Record, Report, Table};
use crate::stats::{linear_fit, median, LinearFit};
use crate::HarnessError;

/// Reference relay time for N = 500, D = 784.
pub const REFERENCE_MS_AT_500: f64 = 44.0;
pub const MIN_R_SQUARED: f64 = 0.98;
/// Largest allowed ratio between per-client step times across N.
pub const MAX_STEP_SPREAD: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRow {
    pub n: u32,
    pub dim: u32,
    pub trial: u64,
    pub success: bool,
    pub total_ms: f64,
    pub per_client_ms: f64,
    pub bytes_per_link: u64,
    pub rounds: u32,
}

impl Record for TrialRow {
    const HEADER: &'static [&'static str] = &[
        "n",
        "dim",
        "trial",
        "success",
        "total_ms",
        "per_client_ms",
        "bytes_per_link",
        "rounds",
    ];
}

/// Medians over trials for one `(N, D)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalabilityRow {
    pub n: u32,
    pub dim: u32,
    pub trials: u32,
    pub total_ms: f64,
    pub per_client_ms: f64,
    pub bytes_per_link: u64,
    pub rounds: u32,
}

impl Record for ScalabilityRow {
    const HEADER: &'static [&'static str] = &[
        "n",
        "dim",
        "trials",
        "total_ms",
        "per_client_ms",
        "bytes_per_link",
        "rounds",
    ];
}

pub struct ScalabilityResult {
    pub trials: Vec<TrialRow>,
    pub rows: Vec<ScalabilityRow>,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn run_trial(
    cfg: &ExperimentConfig,
    n: u32,
    dim: u32,
    trial: u64,
) -> Result<TrialRow, HarnessError> {
    let seed = trial_seed(cfg.seed, "scalability", n, dim, trial);
    let inst = build_instance(
        cfg.params(n, dim),
        &cfg.payload,
        seed,
        SetupMode::Production,
    )?;
    let t = Simulation::new(&inst.setup, FaultPlan::honest(), cfg.sim)?.run();
    let steps: Vec<f64> = t.timings.steps.iter().copied().map(ms).collect();
    Ok(TrialRow {
        n,
        dim,
        trial,
        success: t.is_success(),
        total_ms: ms(t.timings.relay),
        per_client_ms: if steps.is_empty() {
            0.0
        } else {
            median(&steps)
        },
        bytes_per_link: t.counters.relay_frame_bytes.unwrap_or(0),
        rounds: t.rounds,
    })
}

/// Trials run one at a time so that timings do not compete for cores.
pub fn run(cfg: &ExperimentConfig) -> Result<ScalabilityResult, HarnessError> {
    let mut trials = Vec::new();
    let mut rows = Vec::new();
    for (n, dim) in cfg.shapes() {
        // Warm caches and the allocator before measuring.
        run_trial(cfg, n, dim, u64::MAX)?;
        let shape: Vec<TrialRow> = (0..u64::from(cfg.trials))
            .map(|trial| run_trial(cfg, n, dim, trial))
            .collect::<Result<_, _>>()?;
        let col = |f: fn(&TrialRow) -> f64| median(&shape.iter().map(f).collect::<Vec<_>>());
        rows.push(ScalabilityRow {
            n,
            dim,
            trials: cfg.trials,
            total_ms: col(|r| r.total_ms),
            per_client_ms: col(|r| r.per_client_ms),
            bytes_per_link: shape.iter().map(|r| r.bytes_per_link).max().unwrap_or(0),
            rounds: shape.iter().map(|r| r.rounds).max().unwrap_or(0),
        });
        trials.extend(shape);
    }
    Ok(ScalabilityResult { trials, rows })
}

impl ScalabilityResult {
    fn of_dim(&self, dim: u32) -> Vec<&ScalabilityRow> {
        self.rows.iter().filter(|r| r.dim == dim).collect()
    }

    fn dims(&self) -> Vec<u32> {
        let mut dims: Vec<u32> = self.rows.iter().map(|r| r.dim).collect();
        dims.sort_unstable();
        dims.dedup();
        dims
    }

    /// Linear fit of median total time against N for one dimension.
    pub fn fit(&self, dim: u32) -> Option<LinearFit> {
        let rows = self.of_dim(dim);
        let xs: Vec<f64> = rows.iter().map(|r| f64::from(r.n)).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.total_ms).collect();
        linear_fit(&xs, &ys)
    }

    /// Largest over smallest median per-client step time across N.
    pub fn step_spread(&self, dim: u32) -> f64 {
        let steps: Vec<f64> = self.of_dim(dim).iter().map(|r| r.per_client_ms).collect();
        let max = steps.iter().copied().fold(f64::MIN, f64::max);
        let min = steps.iter().copied().fold(f64::MAX, f64::min);
        max / min
    }

    pub fn report(&self) -> Report {
        let mut checks = Vec::new();
        let mut notes = Vec::new();
        let failed = self
            .trials
            .iter()
            .filter(|r| !r.success || r.rounds != r.n + 2)
            .count();
        checks.push(Check::new(
            "runs succeed in N+2 rounds",
            failed == 0,
            format!("{failed}/{} trials off", self.trials.len()),
        ));
        for dim in self.dims() {
            match self.fit(dim) {
                Some(fit) if self.of_dim(dim).len() >= 3 => checks.push(Check::new(
                    format!("linear in N, D={dim}"),
                    fit.r_squared >= MIN_R_SQUARED,
                    format!(
                        "R^2 = {:.4} (min {MIN_R_SQUARED}), slope {:.4} ms/client",
                        fit.r_squared, fit.slope
                    ),
                )),
                _ => notes.push(format!("D={dim}: fewer than three N values, no fit")),
            }
            let spread = self.step_spread(dim);
            checks.push(Check::new(
                format!("per-client time flat, D={dim}"),
                spread < MAX_STEP_SPREAD,
                format!("max/min = {spread:.3} (limit {MAX_STEP_SPREAD})"),
            ));
            if let Some(r) = self.of_dim(dim).into_iter().max_by_key(|r| r.n) {
                notes.push(format!(
                    "N={} D={dim}: median relay {:.3} ms; reference {REFERENCE_MS_AT_500} ms at N=500 D=784",
                    r.n, r.total_ms
                ));
            }
        }
        Report {
            experiment: ExperimentKind::Scalability,
            tables: vec![
                Table::new("scalability", &self.rows),
                Table::new("scalability_trials", &self.trials),
            ],
            checks,
            notes,
        }
    }
}
