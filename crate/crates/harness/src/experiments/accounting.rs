//! Field operation and byte counts per phase.

use cppdd_core::coordinator::SetupMode;
use cppdd_core::metrics::{self, Phase};
use cppdd_core::simnet::{FaultPlan, Simulation, HEADER_LEN};
use serde::Serialize;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::instance::{build_instance, trial_seed};
use crate::report::{Check, Record, Report, Table};
use crate::HarnessError;

/// Allowed band for layer operations over the `4ND` reference.
pub const RATIO_BAND: (f64, f64) = (1.0, 2.0);
/// Relay frame overhead: frame header plus chain position and vector length.
pub const RELAY_HEADER_BYTES: u64 = HEADER_LEN as u64 + 8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AccountingRow {
    pub n: u32,
    pub dim: u32,
    pub obfuscate: u64,
    pub aggregate: u64,
    pub encrypt: u64,
    pub decrypt: u64,
    pub deobfuscate: u64,
    pub layer_total: u64,
    pub reference_4nd: u64,
    pub ratio: f64,
    pub checksum: u64,
    pub inversions: u64,
    pub relay_frame_bytes: Option<u64>,
    pub relay_header_bytes: Option<u64>,
}

impl Record for AccountingRow {
    const HEADER: &'static [&'static str] = &[
        "n",
        "dim",
        "obfuscate",
        "aggregate",
        "encrypt",
        "decrypt",
        "deobfuscate",
        "layer_total",
        "reference_4nd",
        "ratio",
        "checksum",
        "inversions",
        "relay_frame_bytes",
        "relay_header_bytes",
    ];
}

impl AccountingRow {
    pub fn nd(&self) -> u64 {
        u64::from(self.n) * u64::from(self.dim)
    }
}

pub struct AccountingResult {
    pub rows: Vec<AccountingRow>,
}

fn run_shape(cfg: &ExperimentConfig, n: u32, dim: u32) -> Result<AccountingRow, HarnessError> {
    let seed = trial_seed(cfg.seed, "accounting", n, dim, 0);
    let inst = build_instance(
        cfg.params(n, dim),
        &cfg.payload,
        seed,
        SetupMode::Production,
    )?;
    let mut sim = Simulation::new(&inst.setup, FaultPlan::honest(), cfg.sim)?;
    let t = sim.run();
    let before = metrics::snapshot();
    sim.recover()?;
    let recovery = metrics::snapshot().since(&before);

    let ops = |p: Phase| {
        (inst.setup.ops.phase(p) + t.counters.field_ops.phase(p) + recovery.phase(p)).arithmetic()
    };
    let nd = u64::from(n) * u64::from(dim);
    let layer_total: u64 = Phase::LAYERS.iter().map(|&p| ops(p)).sum();
    let inversions = Phase::ALL
        .iter()
        .map(|&p| {
            (inst.setup.ops.phase(p) + t.counters.field_ops.phase(p) + recovery.phase(p)).invs
        })
        .sum();
    let frame = t.counters.relay_frame_bytes;
    Ok(AccountingRow {
        n,
        dim,
        obfuscate: ops(Phase::Obfuscate),
        aggregate: ops(Phase::Aggregate),
        encrypt: ops(Phase::Encrypt),
        decrypt: ops(Phase::Decrypt),
        deobfuscate: ops(Phase::Deobfuscate),
        layer_total,
        reference_4nd: 4 * nd,
        ratio: layer_total as f64 / (4 * nd) as f64,
        checksum: ops(Phase::Checksum),
        inversions,
        relay_frame_bytes: frame,
        relay_header_bytes: frame.map(|b| b - 8 * u64::from(dim)),
    })
}

pub fn run(cfg: &ExperimentConfig) -> Result<AccountingResult, HarnessError> {
    let rows = cfg
        .shapes()
        .into_iter()
        .map(|(n, dim)| run_shape(cfg, n, dim))
        .collect::<Result<_, _>>()?;
    Ok(AccountingResult { rows })
}

impl AccountingResult {
    pub fn report(&self) -> Report {
        let (lo, hi) = RATIO_BAND;
        let in_band = self
            .rows
            .iter()
            .filter(|r| (lo..=hi).contains(&r.ratio))
            .count();
        let obf_exact = self
            .rows
            .iter()
            .filter(|r| r.obfuscate == 2 * r.nd())
            .count();
        let relayed: Vec<_> = self
            .rows
            .iter()
            .filter(|r| r.relay_header_bytes.is_some())
            .collect();
        let header_ok = relayed
            .iter()
            .filter(|r| r.relay_header_bytes == Some(RELAY_HEADER_BYTES))
            .count();
        let total = self.rows.len();
        let mut ratios: Vec<String> = self
            .rows
            .iter()
            .map(|r| format!("{:.3}", r.ratio))
            .collect();
        ratios.dedup();
        Report {
            experiment: ExperimentKind::Accounting,
            tables: vec![Table::new("accounting", &self.rows)],
            checks: vec![
                Check::new(
                    "layer ops within band of 4ND",
                    in_band == total,
                    format!(
                        "{in_band}/{total} in [{lo}, {hi}]; ratios {}",
                        ratios.join(" ")
                    ),
                ),
                Check::new(
                    "obfuscation is 2ND",
                    obf_exact == total,
                    format!("{obf_exact}/{total} exact"),
                ),
                Check::new(
                    "relay bytes are header + 8D",
                    header_ok == relayed.len(),
                    format!(
                        "{header_ok}/{} with a {RELAY_HEADER_BYTES}-byte header",
                        relayed.len()
                    ),
                ),
            ],
            notes: Vec::new(),
        }
    }
}
