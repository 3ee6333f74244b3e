//! Experiment reports: CSV tables plus named pass/fail checks.

use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;

use crate::config::ExperimentKind;

/// A CSV row type with a fixed column list.
pub trait Record: Serialize {
    const HEADER: &'static [&'static str];
}

/// One CSV file, already rendered. Always starts with the header line, even
/// when there are no rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Table {
    pub name: String,
    pub csv: String,
}

impl Table {
    pub fn new<R: Record>(name: &str, rows: &[R]) -> Table {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(Vec::new());
        w.write_record(R::HEADER).expect("writing to memory");
        for r in rows {
            w.serialize(r).expect("flat record");
        }
        let bytes = w.into_inner().expect("writing to memory");
        Table {
            name: name.to_owned(),
            csv: String::from_utf8(bytes).expect("CSV of UTF-8 fields"),
        }
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn rows(&self) -> usize {
        self.csv.lines().count() - 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Check {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        format!("{verdict} {}: {}", self.name, self.detail)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub experiment: ExperimentKind,
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
    /// Reported figures that are not asserted.
    pub notes: Vec<String>,
}

#[derive(Serialize)]
struct Summary<'a> {
    experiment: ExperimentKind,
    passed: bool,
    checks: &'a [Check],
    notes: &'a [String],
    tables: Vec<String>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Writes every table and a `summary.json` into `dir`, creating it.
    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        for t in &self.tables {
            fs::write(dir.join(t.file_name()), &t.csv)?;
        }
        let summary = Summary {
            experiment: self.experiment,
            passed: self.passed(),
            checks: &self.checks,
            notes: &self.notes,
            tables: self.tables.iter().map(Table::file_name).collect(),
        };
        let json = serde_json::to_string_pretty(&summary).map_err(io::Error::other)?;
        fs::write(dir.join("summary.json"), json + "\n")
    }
}
