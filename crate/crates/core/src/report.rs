//! Structured run reports. Keys are kept sorted so that two runs with the same
//! inputs serialize to identical bytes. Non-finite numbers serialize as `null`.

use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::Result;
use crate::problem::ProblemConfig;

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Default)]
pub struct Report {
    root: Map<String, Value>,
}

impl Report {
    /// Starts a report with the tool version, command name and problem echo.
    pub fn new(command: &str, problem: &ProblemConfig) -> Report {
        let mut r = Report::tool_only(command);
        r.set("problem", problem.echo());
        r
    }

    /// Report without a problem section.
    pub fn tool_only(command: &str) -> Report {
        let mut r = Report::default();
        r.set("tool", serde_json::json!({ "name": TOOL_NAME, "version": TOOL_VERSION }));
        r.set("command", command);
        r
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.root.insert(key.to_string(), v);
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.root.get(key)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.root).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}
