//! Check records shared by the assumption and convergence reports.

use std::collections::BTreeMap;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
}

impl CheckStatus {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        }
    }
}

/// A single named verification with the measured values and the tolerances
/// it was judged against.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub values: BTreeMap<String, f64>,
    pub tolerances: BTreeMap<String, f64>,
}

impl Check {
    pub fn new(name: impl Into<String>, status: CheckStatus) -> Self {
        Check {
            name: name.into(),
            status,
            values: BTreeMap::new(),
            tolerances: BTreeMap::new(),
        }
    }

    pub fn value(mut self, key: &str, v: f64) -> Self {
        self.values.insert(key.to_string(), v);
        self
    }

    pub fn tolerance(mut self, key: &str, v: f64) -> Self {
        self.tolerances.insert(key.to_string(), v);
        self
    }

    pub fn passed(&self) -> bool {
        self.status != CheckStatus::Fail
    }
}

/// Outcome of checking the standing assumptions of a quasilinear system:
/// boundedness, Lipschitz continuity and the contraction margin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub checks: Vec<Check>,
    /// Contraction margin (positive when the third assumption holds).
    pub margin: f64,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// First location after which a monitored magnitude stays below `epsilon`
/// for the rest of the recorded window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LadderCrossing {
    pub epsilon: f64,
    pub first_location: Option<f64>,
}

/// Ladder crossings of a magnitude profile `(location, value)`.
pub fn ladder_crossings(profile: &[(f64, f64)], ladder: &[f64]) -> Vec<LadderCrossing> {
    // suffix maxima make "stays below from here on" a single comparison
    let mut suffix = vec![0.0_f64; profile.len() + 1];
    for k in (0..profile.len()).rev() {
        suffix[k] = suffix[k + 1].max(profile[k].1);
    }
    ladder
        .iter()
        .map(|&epsilon| LadderCrossing {
            epsilon,
            first_location: (0..profile.len()).find(|&k| suffix[k] < epsilon).map(|k| profile[k].0),
        })
        .collect()
}
