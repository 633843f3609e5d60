use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::ExperimentConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    ChecksFailed,
    PartialFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: Option<f64>,
    pub threshold: Option<f64>,
    pub detail: String,
}

impl Check {
    /// Passes when `value <= threshold`.
    pub fn at_most(name: &str, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed: value <= threshold, value: Some(value), threshold: Some(threshold), detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskError {
    pub task: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub command: String,
    pub status: Status,
    pub config: ExperimentConfig,
    pub results: Value,
    pub checks: Vec<Check>,
    pub disclosures: Vec<String>,
    pub errors: Vec<TaskError>,
    /// Files written next to the report, relative to the output directory.
    pub artifacts: Vec<String>,
}

/// Accumulates outputs of one command run.
#[derive(Debug, Default)]
pub struct RunLog {
    pub results: serde_json::Map<String, Value>,
    pub checks: Vec<Check>,
    pub disclosures: Vec<String>,
    pub errors: Vec<TaskError>,
    pub artifacts: Vec<(String, String)>,
}

impl RunLog {
    pub fn result<T: Serialize>(&mut self, key: &str, value: &T) -> Result<()> {
        self.results.insert(key.into(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn artifact(&mut self, name: &str, contents: String) {
        self.artifacts.push((name.into(), contents));
    }

    pub fn disclose(&mut self, note: impl Into<String>) {
        self.disclosures.push(note.into());
    }

    pub fn task_error(&mut self, task: &str, err: impl std::fmt::Display) {
        self.errors.push(TaskError { task: task.into(), message: err.to_string() });
    }

    pub fn status(&self) -> Status {
        if !self.errors.is_empty() {
            Status::PartialFailure
        } else if self.checks.iter().any(|c| !c.passed) {
            Status::ChecksFailed
        } else {
            Status::Ok
        }
    }

    pub fn into_report(self, config: &ExperimentConfig) -> (Report, Vec<(String, String)>) {
        let status = self.status();
        let report = Report {
            schema_version: SCHEMA_VERSION,
            tool: "siplab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: config.command.name().into(),
            status,
            config: config.clone(),
            results: Value::Object(self.results),
            checks: self.checks,
            disclosures: self.disclosures,
            errors: self.errors,
            artifacts: self.artifacts.iter().map(|(n, _)| n.clone()).collect(),
        };
        (report, self.artifacts)
    }
}

/// Writes the artifacts, the report and the effective configuration.
pub fn write_outputs(dir: &Path, report: &Report, artifacts: &[(String, String)]) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    for (name, contents) in artifacts {
        let path = dir.join(name);
        std::fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
    }
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    std::fs::write(dir.join("report.json"), json).context("cannot write report.json")?;
    std::fs::write(dir.join("config.toml"), report.config.to_toml()?).context("cannot write config.toml")?;
    Ok(())
}
