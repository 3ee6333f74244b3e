//! Client payload ingest.

use std::path::{Path, PathBuf};

use cppdd_core::field::{FixedPointCodec, Modulus, SeededGenerator};
use cppdd_core::protocol::{CciMatrix, CciRecord};
use rand::{Rng, RngCore};
use thiserror::Error;

use crate::config::PayloadSource;

/// Rows and columns are 1-based.
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("row {row}: malformed CSV: {source}")]
    Malformed {
        row: usize,
        #[source]
        source: csv::Error,
    },
    #[error("row {row}: expected {expected} values, found {got}")]
    Width {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("row {row}, column {col}: {text:?} is not a number")]
    NotANumber {
        row: usize,
        col: usize,
        text: String,
    },
    #[error("row {row}, column {col}: {value} is outside [0, 1]")]
    OutOfRange { row: usize, col: usize, value: f64 },
    #[error("need {needed} rows, file has {got}")]
    TooFewRows { needed: usize, got: usize },
}

/// Payloads as reals and as the encoded contribution index. Row `r` of both
/// belongs to the same client.
#[derive(Clone, Debug)]
pub struct Payloads {
    pub values: Vec<Vec<f64>>,
    pub cci: CciMatrix,
}

/// Loads `n` payloads of dimension `dim`. Synthetic payloads and client
/// UUIDs are derived from `seed`; CSV payloads use the first `n` rows.
pub fn load_payloads(
    source: &PayloadSource,
    n: usize,
    dim: usize,
    codec: &FixedPointCodec,
    seed: u64,
) -> Result<Payloads, IngestError> {
    let mut rng = SeededGenerator::from_label("payloads", seed);
    let values = match source {
        PayloadSource::Synthetic => (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(0.0..=1.0)).collect())
            .collect(),
        PayloadSource::Csv(path) => read_csv(path, n, dim)?,
    };
    let m = Modulus::MERSENNE_61;
    let records = values
        .iter()
        .map(|row| {
            let mut bytes = [0u8; 16];
            rng.fill_bytes(&mut bytes);
            CciRecord {
                uuid: uuid::Builder::from_random_bytes(bytes).into_uuid(),
                payload: codec.encode_vector(row, m).expect("values lie in [0, 1]"),
            }
        })
        .collect();
    Ok(Payloads {
        values,
        cci: CciMatrix::new(records),
    })
}

fn read_csv(path: &Path, n: usize, dim: usize) -> Result<Vec<Vec<f64>>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|source| IngestError::Io {
            path: path.to_owned(),
            source,
        })?;
    let mut rows = Vec::with_capacity(n);
    for (i, record) in reader.records().take(n).enumerate() {
        let row = i + 1;
        let record = record.map_err(|source| IngestError::Malformed { row, source })?;
        if record.len() != dim {
            return Err(IngestError::Width {
                row,
                expected: dim,
                got: record.len(),
            });
        }
        let values = record
            .iter()
            .enumerate()
            .map(|(c, text)| {
                let col = c + 1;
                let value: f64 = text.parse().map_err(|_| IngestError::NotANumber {
                    row,
                    col,
                    text: text.to_owned(),
                })?;
                if (0.0..=1.0).contains(&value) {
                    Ok(value)
                } else {
                    Err(IngestError::OutOfRange { row, col, value })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(values);
    }
    if rows.len() < n {
        return Err(IngestError::TooFewRows {
            needed: n,
            got: rows.len(),
        });
    }
    Ok(rows)
}
