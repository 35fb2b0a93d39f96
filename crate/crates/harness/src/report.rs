use std::path::Path;

use serde::{Deserialize, Serialize};

/// Machine-readable summary of one run, written as `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub experiment: String,
    pub config_hash: String,
    pub passed: bool,
    /// Human-readable reasons for each failed check.
    pub failures: Vec<String>,
    pub metrics: serde_json::Value,
    /// Files written next to the report, relative to the output directory.
    pub outputs: Vec<String>,
    pub degenerate_lrf_count: usize,
    pub wall_clock_secs: f64,
}

impl RunReport {
    pub const FILE_NAME: &'static str = "report.json";

    pub fn new(experiment: &str) -> Self {
        Self {
            experiment: experiment.into(),
            config_hash: String::new(),
            passed: true,
            failures: Vec::new(),
            metrics: serde_json::Value::Null,
            outputs: Vec::new(),
            degenerate_lrf_count: 0,
            wall_clock_secs: 0.0,
        }
    }

    /// Records a check; a false `ok` fails the run with `message`.
    pub fn check(&mut self, ok: bool, message: impl Into<String>) {
        if !ok {
            self.passed = false;
            self.failures.push(message.into());
        }
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(Self::FILE_NAME), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Copy with the wall-clock time zeroed, for comparing reruns.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_clock_secs: 0.0,
            ..self.clone()
        }
    }
}
