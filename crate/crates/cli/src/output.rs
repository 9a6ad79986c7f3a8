//! Reports and trajectory tables, and their on-disk formats.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use unpredictable_core::{Check, CheckStatus, DVector, GridFunction, VectorSequence};

use crate::CliError;

/// The JSON report written next to the tables.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub example: String,
    pub config_echo: Value,
    pub checks: Vec<Check>,
    pub evidence: BTreeMap<String, Value>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
}

impl Report {
    pub fn new(example: impl Into<String>, config_echo: Value) -> Self {
        Report {
            example: example.into(),
            config_echo,
            checks: Vec::new(),
            evidence: BTreeMap::new(),
            timings: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn push_all(&mut self, checks: impl IntoIterator<Item = Check>) {
        self.checks.extend(checks);
    }

    /// Records checks that could not run because an earlier one failed.
    pub fn skip(&mut self, names: &[&str]) {
        for name in names {
            self.checks.push(Check::new(*name, CheckStatus::NotApplicable));
        }
    }

    pub fn evidence(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.evidence.insert(key.to_string(), v);
    }

    pub fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        *self.timings.entry(stage.to_string()).or_insert(0.0) += start.elapsed().as_secs_f64();
        out
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.passed())
            .map(|c| c.name.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Locations {
    Time(Vec<f64>),
    Index(Vec<i64>),
}

/// A trajectory written as `t,x1,...,xm` or `i,x1,...,xp`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub locations: Locations,
    pub values: Vec<DVector<f64>>,
}

impl Table {
    pub fn from_grid(name: &str, g: &GridFunction) -> Self {
        Table {
            name: name.to_string(),
            locations: Locations::Time((0..g.len()).map(|k| g.time(k)).collect()),
            values: g.samples().to_vec(),
        }
    }

    pub fn from_sequence(name: &str, s: &VectorSequence) -> Self {
        Table {
            name: name.to_string(),
            locations: Locations::Index((s.base_index()..s.end_index()).collect()),
            values: s.values().to_vec(),
        }
    }
}

/// Everything a pipeline produces.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Report,
    pub tables: Vec<Table>,
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_number(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv(path: &Path, table: &Table) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    let dim = table.values.first().map_or(0, |v| v.len());
    let mut header = vec![match table.locations {
        Locations::Time(_) => "t".to_string(),
        Locations::Index(_) => "i".to_string(),
    }];
    header.extend((1..=dim).map(|c| format!("x{c}")));
    w.write_record(&header)?;
    for (k, v) in table.values.iter().enumerate() {
        let mut row = Vec::with_capacity(dim + 1);
        row.push(match &table.locations {
            Locations::Time(t) => format_number(t[k]),
            Locations::Index(i) => i[k].to_string(),
        });
        row.extend(v.iter().map(|&x| format_number(x)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `<prefix>_<table>.csv` for each table and `<prefix>_report.json`.
/// Timings are machine dependent and only written when asked for.
pub fn write_outcome(dir: &Path, prefix: &str, outcome: &Outcome, timings: bool) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut written = Vec::new();
    for table in &outcome.tables {
        let path = dir.join(format!("{prefix}_{}.csv", table.name));
        write_csv(&path, table)?;
        written.push(path);
    }
    let mut report = outcome.report.clone();
    if !timings {
        report.timings.clear();
    }
    let path = dir.join(format!("{prefix}_report.json"));
    let mut text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    written.push(path);
    Ok(written)
}

/// A CSV read back: the location column and the state columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadTable {
    pub locations: Locations,
    pub values: Vec<DVector<f64>>,
}

/// Reads a table written by [`write_csv`] or following the same header
/// convention. At most `limit` rows are read.
pub fn read_csv(path: &Path, limit: Option<usize>) -> Result<ReadTable, CliError> {
    let bad = |msg: String| CliError::Config(format!("{}: {msg}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let header = r.headers()?.clone();
    let first = header.get(0).map(str::trim).unwrap_or("");
    let sequence = match first {
        "i" => true,
        "t" => false,
        other => return Err(bad(format!("first column must be `t` or `i`, found `{other}`"))),
    };
    let dim = header.len() - 1;
    if dim == 0 {
        return Err(bad("no state columns".into()));
    }
    for (c, name) in header.iter().skip(1).enumerate() {
        if name.trim() != format!("x{}", c + 1) {
            return Err(bad(format!(
                "column {} must be named x{}, found `{name}`",
                c + 2,
                c + 1
            )));
        }
    }
    let mut times = Vec::new();
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in r.records().enumerate() {
        if limit.is_some_and(|l| values.len() >= l) {
            break;
        }
        let rec = rec?;
        let row = line + 2;
        if rec.len() != dim + 1 {
            return Err(bad(format!("row {row} has {} fields, expected {}", rec.len(), dim + 1)));
        }
        let num = |k: usize| -> Result<f64, CliError> {
            rec[k]
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    bad(format!(
                        "row {row}, column {}: `{}` is not a finite number",
                        k + 1,
                        &rec[k]
                    ))
                })
        };
        if sequence {
            let i = rec[0]
                .trim()
                .parse::<i64>()
                .map_err(|_| bad(format!("row {row}: `{}` is not an integer index", &rec[0])))?;
            indices.push(i);
        } else {
            times.push(num(0)?);
        }
        values.push(DVector::from_iterator(
            dim,
            (1..=dim).map(num).collect::<Result<Vec<_>, _>>()?,
        ));
    }
    let locations = if sequence {
        Locations::Index(indices)
    } else {
        Locations::Time(times)
    };
    Ok(ReadTable { locations, values })
}
