use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use cppdd_core::coordinator::{SetupConfig, SetupMode};
use cppdd_harness::instance::build_instance;
use cppdd_harness::{run_experiment, ExperimentConfig, ExperimentKind, PayloadSource};

const EXIT_ASSERTION: u8 = 2;
const EXIT_USAGE: u8 = 1;

/// Simulate unanimous-release aggregation runs.
#[derive(Debug, Parser)]
#[command(name = "cppdd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run coordinator setup and write the broadcast packet and envelopes.
    Setup {
        /// JSON setup configuration.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Headerless CSV of payloads in [0, 1]; synthetic when omitted.
        #[arg(long)]
        payloads: Option<PathBuf>,
    },
    /// Run an experiment and write its CSV tables and summary.
    Run {
        /// correctness, detection, scalability, recovery or accounting.
        #[arg(long)]
        experiment: String,
        /// JSON experiment configuration; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// `CPPDD_SEED`, when set, replaces the configured seed.
fn seed_override() -> Result<Option<u64>> {
    match std::env::var("CPPDD_SEED") {
        Ok(s) => {
            Ok(Some(s.trim().parse().with_context(|| {
                format!("CPPDD_SEED={s:?} is not a u64")
            })?))
        }
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => bail!("CPPDD_SEED: {e}"),
    }
}

fn setup(config: PathBuf, out: PathBuf, payloads: Option<PathBuf>) -> Result<bool> {
    let text =
        fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
    let mut cfg: SetupConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", config.display()))?;
    if let Some(seed) = seed_override()? {
        cfg.seed = seed;
    }
    let params = cfg.params()?;
    let source = payloads.map_or(PayloadSource::Synthetic, PayloadSource::Csv);
    let inst = build_instance(params, &source, cfg.seed, SetupMode::Production)?;

    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("packet.bin"), inst.setup.packet.to_bytes())?;
    for e in &inst.setup.envelopes {
        fs::write(
            out.join(format!("envelope_{}.bin", e.priority())),
            e.to_bytes(),
        )?;
    }
    println!(
        "wrote packet.bin and {} envelopes to {} (N={}, D={}, seed {})",
        inst.setup.envelopes.len(),
        out.display(),
        params.n_clients,
        params.dim,
        cfg.seed
    );
    Ok(true)
}

fn run(experiment: String, config: Option<PathBuf>, out: PathBuf) -> Result<bool> {
    let kind: ExperimentKind = experiment.parse()?;
    let mut cfg = match &config {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ExperimentConfig::from_json(kind, &text)?
        }
        None => ExperimentConfig::defaults(kind),
    };
    if let Some(seed) = seed_override()? {
        cfg.seed = seed;
    }
    let report = run_experiment(&cfg)?;
    report
        .write_to(&out)
        .with_context(|| format!("writing to {}", out.display()))?;
    for c in &report.checks {
        println!("{}", c.line());
    }
    for n in &report.notes {
        println!("note: {n}");
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Setup {
            config,
            out,
            payloads,
        } => setup(config, out, payloads),
        Command::Run {
            experiment,
            config,
            out,
        } => run(experiment, config, out),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_ASSERTION),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
