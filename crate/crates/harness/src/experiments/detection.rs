//! Single-client tampering against honest controls.

use cppdd_core::coordinator::SetupMode;
use cppdd_core::field::{Modulus, SeededGenerator};
use cppdd_core::protocol::Party;
use cppdd_core::simnet::{Behavior, FaultPlan, Simulation};
use rand::{Rng, RngCore};
use serde::Serialize;

use super::{fmt_party, map_trials};
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::instance::{build_instance, trial_seed};
use crate::report::{Check, Record, Report, Table};
use crate::HarnessError;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetectionRow {
    pub n: u32,
    pub dim: u32,
    pub trial: u64,
    pub tampered: bool,
    /// Priority of the tampering client, 0 for honest controls.
    pub tamper_position: u32,
    pub detected: bool,
    pub detector: String,
    pub failed_step: Option<u32>,
    pub reason: String,
    /// The abort came from the tamperer's successor, or the board when the
    /// last client tampered.
    pub local: bool,
}

impl Record for DetectionRow {
    const HEADER: &'static [&'static str] = &[
        "n",
        "dim",
        "trial",
        "tampered",
        "tamper_position",
        "detected",
        "detector",
        "failed_step",
        "reason",
        "local",
    ];
}

/// The party expected to catch tampering by client `j` of `n`.
pub fn expected_detector(j: u32, n: u32) -> Party {
    if j == n {
        Party::Board
    } else {
        Party::Client(j + 1)
    }
}

/// A delta of length `dim` whose element sum is nonzero mod `p`.
pub fn sum_changing_delta(rng: &mut impl RngCore, modulus: Modulus, dim: usize) -> Vec<u64> {
    loop {
        let delta: Vec<u64> = (0..dim).map(|_| modulus.reduce(rng.next_u64())).collect();
        let sum = delta.iter().fold(0u64, |acc, &x| modulus.reduce(acc + x));
        if sum != 0 {
            return delta;
        }
    }
}

pub struct DetectionResult {
    pub rows: Vec<DetectionRow>,
}

pub fn run(cfg: &ExperimentConfig) -> Result<DetectionResult, HarnessError> {
    let mut rows = Vec::new();
    for (n, dim) in cfg.shapes() {
        for tampered in [true, false] {
            rows.extend(map_trials(cfg.parallel, cfg.trials.into(), |trial| {
                run_trial(cfg, n, dim, trial, tampered)
            })?);
        }
    }
    Ok(DetectionResult { rows })
}

fn run_trial(
    cfg: &ExperimentConfig,
    n: u32,
    dim: u32,
    trial: u64,
    tampered: bool,
) -> Result<DetectionRow, HarnessError> {
    let label = if tampered {
        "detection-tamper"
    } else {
        "detection-honest"
    };
    let seed = trial_seed(cfg.seed, label, n, dim, trial);
    let inst = build_instance(
        cfg.params(n, dim),
        &cfg.payload,
        seed,
        SetupMode::Production,
    )?;
    let mut rng = SeededGenerator::from_label("tamper", seed);
    let (position, plan) = if tampered {
        let j = rng.random_range(1..=n);
        let delta = sum_changing_delta(&mut rng, inst.setup.params().modulus, dim as usize);
        (
            j,
            FaultPlan::honest().with(j, Behavior::TamperState { delta }),
        )
    } else {
        (0, FaultPlan::honest())
    };
    let transcript = Simulation::new(&inst.setup, plan, cfg.sim)?.run();
    let notice = transcript.abort_notice();
    let detector = notice.map(|a| a.issuer);
    Ok(DetectionRow {
        n,
        dim,
        trial,
        tampered,
        tamper_position: position,
        detected: notice.is_some(),
        detector: fmt_party(detector),
        failed_step: notice.map(|a| a.failed_step),
        reason: notice.map_or_else(String::new, |a| a.reason.to_string()),
        local: tampered && detector == Some(expected_detector(position, n)),
    })
}

impl DetectionResult {
    pub fn tampered(&self) -> impl Iterator<Item = &DetectionRow> {
        self.rows.iter().filter(|r| r.tampered)
    }

    pub fn honest(&self) -> impl Iterator<Item = &DetectionRow> {
        self.rows.iter().filter(|r| !r.tampered)
    }

    pub fn report(&self) -> Report {
        let tampered = self.tampered().count();
        let caught = self.tampered().filter(|r| r.detected).count();
        let local = self.tampered().filter(|r| r.local).count();
        let honest = self.honest().count();
        let false_aborts = self.honest().filter(|r| r.detected).count();
        Report {
            experiment: ExperimentKind::Detection,
            tables: vec![Table::new("detection", &self.rows)],
            checks: vec![
                Check::new(
                    "tampering detected",
                    caught == tampered,
                    format!("{caught}/{tampered} aborted"),
                ),
                Check::new(
                    "honest runs complete",
                    false_aborts == 0,
                    format!("{false_aborts}/{honest} aborted"),
                ),
                Check::new(
                    "detection is local",
                    local == tampered,
                    format!("{local}/{tampered} at the successor"),
                ),
            ],
            notes: Vec::new(),
        }
    }
}
