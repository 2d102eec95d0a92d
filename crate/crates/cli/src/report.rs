//! `report.json`: config echo, every gate with its statistic and threshold,
//! and the numerical results. Wall-clock time is kept out of it so a rerun
//! reproduces the file byte for byte; it goes to `timing.json` instead.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::config::Config;
use crate::CliError;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, Serialize, PartialEq, Eq)]
pub enum Comparison {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = "==")]
    Equals,
}

#[derive(Debug, Clone, Serialize)]
pub struct TestOutcome {
    pub name: String,
    pub statistic: f64,
    pub comparison: Comparison,
    pub threshold: f64,
    pub passed: bool,
}

impl TestOutcome {
    pub fn at_most(name: impl Into<String>, statistic: f64, threshold: f64) -> Self {
        Self { name: name.into(), statistic, comparison: Comparison::AtMost, threshold, passed: statistic <= threshold }
    }

    /// Boolean check encoded as `statistic == threshold` over {0, 1}.
    pub fn expect(name: impl Into<String>, actual: bool, expected: bool) -> Self {
        let b = |x: bool| if x { 1.0 } else { 0.0 };
        Self { name: name.into(), statistic: b(actual), comparison: Comparison::Equals, threshold: b(expected), passed: actual == expected }
    }
}

#[derive(Debug, Serialize)]
pub struct Report<'a> {
    pub artifact_version: &'static str,
    pub command: &'a str,
    pub seed: u64,
    pub replicas: usize,
    pub config: &'a Config,
    pub tests: Vec<TestOutcome>,
    pub passed: bool,
    pub result: Value,
}

impl<'a> Report<'a> {
    pub fn new(command: &'a str, config: &'a Config, tests: Vec<TestOutcome>, result: Value) -> Self {
        let passed = tests.iter().all(|t| t.passed);
        Self { artifact_version: ARTIFACT_VERSION, command, seed: config.seed, replicas: config.replicas, config, tests, passed, result }
    }
}

#[derive(Debug, Serialize)]
pub struct Timing<'a> {
    pub command: &'a str,
    pub wall_clock_seconds: f64,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e.into()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}
