//! Experiment configuration.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use cppdd_core::field::{FixedPointCodec, Modulus};
use cppdd_core::protocol::ProtocolParams;
use cppdd_core::simnet::{FaultPlan, SimConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Correctness,
    Detection,
    Scalability,
    Recovery,
    Accounting,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::Correctness,
        ExperimentKind::Detection,
        ExperimentKind::Scalability,
        ExperimentKind::Recovery,
        ExperimentKind::Accounting,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Correctness => "correctness",
            ExperimentKind::Detection => "detection",
            ExperimentKind::Scalability => "scalability",
            ExperimentKind::Recovery => "recovery",
            ExperimentKind::Accounting => "accounting",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ConfigError::UnknownExperiment(s.to_owned()))
    }
}

/// Where client payloads come from.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadSource {
    /// Uniform reals in `[0, 1]` drawn from the trial seed.
    #[default]
    Synthetic,
    /// Headerless CSV, one client per row, values in `[0, 1]`.
    Csv(PathBuf),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown experiment {0:?}")]
    UnknownExperiment(String),
    #[error("config names experiment {config}, but {requested} was requested")]
    ExperimentMismatch {
        config: ExperimentKind,
        requested: ExperimentKind,
    },
    #[error("invalid config JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error("{what} must be at least 1, got {got}")]
    TooSmall { what: &'static str, got: u64 },
    #[error("scale of {0} bits is not supported")]
    Scale(u32),
}

/// A fully resolved experiment configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Client counts to sweep.
    pub n_values: Vec<u32>,
    /// Payload dimensions to sweep.
    pub dims: Vec<u32>,
    /// Trials per `(N, D)` shape. Detection runs this many tampered and this
    /// many honest instances.
    pub trials: u32,
    pub seed: u64,
    pub payload: PayloadSource,
    pub scale_bits: u32,
    pub tau: u32,
    pub broadcast_lo: bool,
    pub hash_full_vector: bool,
    pub sim: SimConfig,
    /// Faults applied to every correctness trial. Honest by default.
    pub plan: FaultPlan,
    /// Spread trials over threads. Scalability always runs sequentially.
    pub parallel: bool,
}

/// Keys accepted in a JSON config file. Missing keys take the experiment's
/// defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    experiment: Option<ExperimentKind>,
    n_values: Option<Vec<u32>>,
    dims: Option<Vec<u32>>,
    trials: Option<u32>,
    seed: Option<u64>,
    payload: Option<PayloadSource>,
    scale_bits: Option<u32>,
    tau: Option<u32>,
    broadcast_lo: Option<bool>,
    hash_full_vector: Option<bool>,
    sim: Option<SimConfig>,
    plan: Option<FaultPlan>,
    parallel: Option<bool>,
}

impl ExperimentConfig {
    pub fn defaults(experiment: ExperimentKind) -> Self {
        let (n_values, dims, trials) = match experiment {
            ExperimentKind::Correctness => (vec![1, 2, 10, 100], vec![1, 8, 784], 100),
            ExperimentKind::Detection => (vec![20], vec![64], 1000),
            ExperimentKind::Scalability => (vec![10, 50, 100, 200, 500], vec![784], 5),
            ExperimentKind::Recovery => (vec![10], vec![784], 1),
            ExperimentKind::Accounting => (vec![2, 10, 50, 100], vec![1, 8, 784], 1),
        };
        ExperimentConfig {
            experiment,
            n_values,
            dims,
            trials,
            seed: 0,
            payload: PayloadSource::Synthetic,
            scale_bits: FixedPointCodec::DEFAULT_SCALE_BITS,
            tau: ProtocolParams::DEFAULT_TAU,
            broadcast_lo: false,
            hash_full_vector: false,
            sim: SimConfig::default(),
            plan: FaultPlan::honest(),
            parallel: true,
        }
    }

    /// Parses a JSON config for `experiment`, filling gaps with defaults.
    pub fn from_json(experiment: ExperimentKind, json: &str) -> Result<Self, ConfigError> {
        let file: ConfigFile = serde_json::from_str(json)?;
        if let Some(named) = file.experiment {
            if named != experiment {
                return Err(ConfigError::ExperimentMismatch {
                    config: named,
                    requested: experiment,
                });
            }
        }
        let d = ExperimentConfig::defaults(experiment);
        let cfg = ExperimentConfig {
            experiment,
            n_values: file.n_values.unwrap_or(d.n_values),
            dims: file.dims.unwrap_or(d.dims),
            trials: file.trials.unwrap_or(d.trials),
            seed: file.seed.unwrap_or(d.seed),
            payload: file.payload.unwrap_or(d.payload),
            scale_bits: file.scale_bits.unwrap_or(d.scale_bits),
            tau: file.tau.unwrap_or(d.tau),
            broadcast_lo: file.broadcast_lo.unwrap_or(d.broadcast_lo),
            hash_full_vector: file.hash_full_vector.unwrap_or(d.hash_full_vector),
            sim: file.sim.unwrap_or(d.sim),
            plan: file.plan.unwrap_or(d.plan),
            parallel: file.parallel.unwrap_or(d.parallel),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_values.is_empty() {
            return Err(ConfigError::Empty("n_values"));
        }
        if self.dims.is_empty() {
            return Err(ConfigError::Empty("dims"));
        }
        if let Some(&n) = self.n_values.iter().find(|&&n| n == 0) {
            return Err(ConfigError::TooSmall {
                what: "N",
                got: n.into(),
            });
        }
        if let Some(&d) = self.dims.iter().find(|&&d| d == 0) {
            return Err(ConfigError::TooSmall {
                what: "D",
                got: d.into(),
            });
        }
        if self.trials == 0 {
            return Err(ConfigError::TooSmall {
                what: "trials",
                got: 0,
            });
        }
        FixedPointCodec::new(self.scale_bits, Modulus::MERSENNE_61)
            .map_err(|_| ConfigError::Scale(self.scale_bits))?;
        Ok(())
    }

    pub fn codec(&self) -> FixedPointCodec {
        FixedPointCodec::new(self.scale_bits, Modulus::MERSENNE_61).expect("validated")
    }

    pub fn params(&self, n: u32, dim: u32) -> ProtocolParams {
        ProtocolParams {
            n_clients: n,
            dim,
            modulus: Modulus::MERSENNE_61,
            scale_bits: self.scale_bits,
            tau: self.tau,
            broadcast_lo: self.broadcast_lo,
            hash_full_vector: self.hash_full_vector,
        }
    }

    /// Every `(N, D)` pair, N-major.
    pub fn shapes(&self) -> Vec<(u32, u32)> {
        self.n_values
            .iter()
            .flat_map(|&n| self.dims.iter().map(move |&d| (n, d)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_overrides_defaults() {
        let cfg = ExperimentConfig::from_json(
            ExperimentKind::Detection,
            r#"{"trials": 7, "payload": {"csv": "x.csv"}, "sim": {"timeout_ticks": 5}}"#,
        )
        .unwrap();
        assert_eq!(cfg.trials, 7);
        assert_eq!(cfg.n_values, vec![20]);
        assert_eq!(cfg.payload, PayloadSource::Csv("x.csv".into()));
        assert_eq!(cfg.sim.timeout_ticks, 5);
        assert_eq!(cfg.sim.latency_ticks, 1);
    }

    #[test]
    fn rejects_bad_values() {
        let k = ExperimentKind::Correctness;
        assert!(matches!(
            ExperimentConfig::from_json(k, r#"{"trials": 0}"#),
            Err(ConfigError::TooSmall { what: "trials", .. })
        ));
        assert!(matches!(
            ExperimentConfig::from_json(k, r#"{"n_values": [3, 0]}"#),
            Err(ConfigError::TooSmall { what: "N", .. })
        ));
        assert!(matches!(
            ExperimentConfig::from_json(k, r#"{"dims": []}"#),
            Err(ConfigError::Empty("dims"))
        ));
        assert!(matches!(
            ExperimentConfig::from_json(k, r#"{"scale_bits": 60}"#),
            Err(ConfigError::Scale(60))
        ));
        assert!(matches!(
            ExperimentConfig::from_json(k, r#"{"trails": 3}"#),
            Err(ConfigError::Json(_))
        ));
        assert!(matches!(
            ExperimentConfig::from_json(k, r#"{"experiment": "recovery"}"#),
            Err(ConfigError::ExperimentMismatch { .. })
        ));
    }

    #[test]
    fn names_roundtrip() {
        for k in ExperimentKind::ALL {
            assert_eq!(k.name().parse::<ExperimentKind>().unwrap(), k);
        }
        assert!("bogus".parse::<ExperimentKind>().is_err());
    }
}
