//! Honest runs: the chain ends at the sum of masked payloads, every check
//! passes and every client recovers its own payload.

use cppdd_core::coordinator::SetupMode;
use cppdd_core::field::FieldVector;
use cppdd_core::protocol::data_checksum;
use cppdd_core::simnet::{EventKind, Simulation};
use serde::Serialize;

use super::map_trials;
use crate::config::ExperimentConfig;
use crate::instance::{build_instance, trial_seed};
use crate::report::{Check, Record, Report, Table};
use crate::HarnessError;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrectnessRow {
    pub n: u32,
    pub dim: u32,
    pub trial: u64,
    pub seed: u64,
    pub success: bool,
    pub rounds: u32,
    pub chain_matches_sum: bool,
    pub steps_validated: u32,
    pub retries: u32,
    pub ratios_all_one: bool,
    pub sum_check: u64,
    pub recovered_exact: bool,
}

impl Record for CorrectnessRow {
    const HEADER: &'static [&'static str] = &[
        "n",
        "dim",
        "trial",
        "seed",
        "success",
        "rounds",
        "chain_matches_sum",
        "steps_validated",
        "retries",
        "ratios_all_one",
        "sum_check",
        "recovered_exact",
    ];
}

impl CorrectnessRow {
    pub fn is_correct(&self) -> bool {
        self.success
            && self.rounds == self.n + 2
            && self.chain_matches_sum
            && self.steps_validated == self.n
            && self.retries == 0
            && self.ratios_all_one
            && self.sum_check == u64::from(self.dim)
            && self.recovered_exact
    }
}

pub struct CorrectnessResult {
    pub rows: Vec<CorrectnessRow>,
}

pub fn run(cfg: &ExperimentConfig) -> Result<CorrectnessResult, HarnessError> {
    let mut rows = Vec::new();
    for (n, dim) in cfg.shapes() {
        rows.extend(map_trials(cfg.parallel, cfg.trials.into(), |trial| {
            run_trial(cfg, n, dim, trial)
        })?);
    }
    Ok(CorrectnessResult { rows })
}

fn run_trial(
    cfg: &ExperimentConfig,
    n: u32,
    dim: u32,
    trial: u64,
) -> Result<CorrectnessRow, HarnessError> {
    let seed = trial_seed(cfg.seed, "correctness", n, dim, trial);
    let inst = build_instance(cfg.params(n, dim), &cfg.payload, seed, SetupMode::Audit)?;
    let mut sim = Simulation::new(&inst.setup, cfg.plan.clone(), cfg.sim)?;
    let transcript = sim.run();

    // Sum of masked payloads, taken from the envelopes handed to clients.
    let m = inst.setup.params().modulus;
    let mut masked_sum = FieldVector::zeros(m, dim as usize)?;
    for e in &inst.setup.envelopes {
        masked_sum.add_assign(e.obfuscated())?;
    }
    let released = sim.board().release().cloned();
    let chain_matches_sum = released.as_ref() == Some(&masked_sum);
    let (ratios_all_one, sum_check) = match &released {
        Some(l) => {
            let c = data_checksum(&masked_sum, l)?;
            let all_one = c.ratios.iter().all(|r| r.value() == 1);
            (all_one, c.sum_check.value())
        }
        None => (false, 0),
    };
    let steps_validated = transcript
        .events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::Validated { .. }))
        .count() as u32;
    let recovered_exact = match sim.recover() {
        Ok(recovered) => recovered.iter().enumerate().all(|(i, payload)| {
            let row = inst.row_of(i as u32 + 1);
            *payload == inst.payloads.cci.records[row].payload
        }),
        Err(_) => false,
    };

    Ok(CorrectnessRow {
        n,
        dim,
        trial,
        seed,
        success: transcript.is_success(),
        rounds: transcript.rounds,
        chain_matches_sum,
        steps_validated,
        retries: transcript.counters.total_retries(),
        ratios_all_one,
        sum_check,
        recovered_exact,
    })
}

impl CorrectnessResult {
    pub fn report(&self) -> Report {
        let mut shapes: Vec<(u32, u32)> = self.rows.iter().map(|r| (r.n, r.dim)).collect();
        shapes.dedup();
        let checks = shapes
            .into_iter()
            .map(|(n, dim)| {
                let of_shape: Vec<_> = self
                    .rows
                    .iter()
                    .filter(|r| (r.n, r.dim) == (n, dim))
                    .collect();
                let good = of_shape.iter().filter(|r| r.is_correct()).count();
                Check::new(
                    format!("correct N={n} D={dim}"),
                    good == of_shape.len(),
                    format!("{good}/{} instances", of_shape.len()),
                )
            })
            .collect();
        Report {
            experiment: crate::config::ExperimentKind::Correctness,
            tables: vec![Table::new("correctness", &self.rows)],
            checks,
            notes: Vec::new(),
        }
    }
}
