//! Machine-readable check results.

use serde::{Deserialize, Serialize};

pub const SCHEMA: &str = "report.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check: String,
    pub case: String,
    pub statistic: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl CheckResult {
    /// Passes iff `statistic <= tolerance`.
    pub fn at_most(check: &str, case: &str, statistic: f64, tolerance: f64) -> Self {
        CheckResult {
            check: check.to_string(),
            case: case.to_string(),
            statistic,
            tolerance,
            pass: statistic <= tolerance,
            detail: None,
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub command: String,
    pub results: Vec<CheckResult>,
    pub pass: bool,
}

impl Report {
    pub fn new(command: &str, results: Vec<CheckResult>) -> Self {
        let pass = results.iter().all(|r| r.pass);
        Report {
            schema: SCHEMA.to_string(),
            command: command.to_string(),
            results,
            pass,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serialisable");
        s.push('\n');
        s
    }
}
