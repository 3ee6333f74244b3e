//! Fixed-point round trip: decoded recoveries against the original reals.

use cppdd_core::coordinator::SetupMode;
use cppdd_core::simnet::{FaultPlan, Simulation};
use serde::Serialize;

use super::map_trials;
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::instance::{build_instance, trial_seed};
use crate::report::{Check, Record, Report, Table};
use crate::HarnessError;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecoveryRow {
    pub n: u32,
    pub dim: u32,
    pub trial: u64,
    pub client: u32,
    pub uuid: String,
    pub max_abs_err: f64,
    pub mean_abs_err: f64,
}

impl Record for RecoveryRow {
    const HEADER: &'static [&'static str] = &[
        "n",
        "dim",
        "trial",
        "client",
        "uuid",
        "max_abs_err",
        "mean_abs_err",
    ];
}

/// One element, original beside recovered.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValueRow {
    pub n: u32,
    pub trial: u64,
    pub client: u32,
    pub index: usize,
    pub original: f64,
    pub recovered: f64,
}

impl Record for ValueRow {
    const HEADER: &'static [&'static str] =
        &["n", "trial", "client", "index", "original", "recovered"];
}

pub struct RecoveryResult {
    pub scale_bits: u32,
    pub rows: Vec<RecoveryRow>,
    pub values: Vec<ValueRow>,
    /// Runs that aborted, as `(n, dim, trial)`.
    pub aborted: Vec<(u32, u32, u64)>,
}

type TrialOutput = (Vec<RecoveryRow>, Vec<ValueRow>, bool);

fn run_trial(
    cfg: &ExperimentConfig,
    n: u32,
    dim: u32,
    trial: u64,
) -> Result<TrialOutput, HarnessError> {
    let seed = trial_seed(cfg.seed, "recovery", n, dim, trial);
    let inst = build_instance(
        cfg.params(n, dim),
        &cfg.payload,
        seed,
        SetupMode::Production,
    )?;
    let mut sim = Simulation::new(&inst.setup, FaultPlan::honest(), cfg.sim)?;
    if !sim.run().is_success() {
        return Ok((Vec::new(), Vec::new(), false));
    }
    let codec = cfg.codec();
    let mut rows = Vec::new();
    let mut values = Vec::new();
    for node in sim.nodes() {
        let client = node.priority();
        let row = inst.row_of(client);
        let original = &inst.payloads.values[row];
        let recovered = node.recover(&codec)?;
        let errs: Vec<f64> = original
            .iter()
            .zip(&recovered)
            .map(|(a, b)| (a - b).abs())
            .collect();
        rows.push(RecoveryRow {
            n,
            dim,
            trial,
            client,
            uuid: inst.payloads.cci.records[row].uuid.to_string(),
            max_abs_err: errs.iter().copied().fold(0.0, f64::max),
            mean_abs_err: errs.iter().sum::<f64>() / errs.len() as f64,
        });
        values.extend(
            original
                .iter()
                .zip(&recovered)
                .enumerate()
                .map(|(index, (&o, &r))| ValueRow {
                    n,
                    trial,
                    client,
                    index,
                    original: o,
                    recovered: r,
                }),
        );
    }
    Ok((rows, values, true))
}

pub fn run(cfg: &ExperimentConfig) -> Result<RecoveryResult, HarnessError> {
    let mut result = RecoveryResult {
        scale_bits: cfg.scale_bits,
        rows: Vec::new(),
        values: Vec::new(),
        aborted: Vec::new(),
    };
    for (n, dim) in cfg.shapes() {
        let trials = map_trials(cfg.parallel, cfg.trials.into(), |t| {
            run_trial(cfg, n, dim, t)
        })?;
        for (trial, (rows, values, ok)) in trials.into_iter().enumerate() {
            if !ok {
                result.aborted.push((n, dim, trial as u64));
            }
            result.rows.extend(rows);
            result.values.extend(values);
        }
    }
    Ok(result)
}

impl RecoveryResult {
    /// The asserted error bound, `2^-s`.
    pub fn bound(&self) -> f64 {
        (-f64::from(self.scale_bits)).exp2()
    }

    pub fn max_error(&self) -> f64 {
        self.rows.iter().map(|r| r.max_abs_err).fold(0.0, f64::max)
    }

    pub fn report(&self) -> Report {
        let max = self.max_error();
        let mean = if self.rows.is_empty() {
            0.0
        } else {
            self.rows.iter().map(|r| r.mean_abs_err).sum::<f64>() / self.rows.len() as f64
        };
        Report {
            experiment: ExperimentKind::Recovery,
            tables: vec![
                Table::new("recovery", &self.rows),
                Table::new("recovery_values", &self.values),
            ],
            checks: vec![
                Check::new(
                    "runs succeed",
                    self.aborted.is_empty(),
                    format!("{} aborted", self.aborted.len()),
                ),
                Check::new(
                    "recovery error bounded",
                    !self.rows.is_empty() && max <= self.bound(),
                    format!(
                        "max {max:.3e}, bound 2^-{} = {:.3e}",
                        self.scale_bits,
                        self.bound()
                    ),
                ),
            ],
            notes: vec![format!("mean absolute error {mean:.3e}")],
        }
    }
}
