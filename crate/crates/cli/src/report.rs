//! Pipeline results and how they are written to disk.

use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

/// One invariant of a pipeline's suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    /// Asserted checks decide the exit status; reported ones are informational.
    pub asserted: bool,
    pub passed: bool,
    pub detail: String,
}

/// A CSV file: header and rows of already formatted cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(file: &str, header: &[&str]) -> Self {
        Table { file: file.to_string(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Format a number for CSV output; undefined values are left empty.
pub fn cell(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

/// Everything a pipeline produced.
#[derive(Debug, Clone)]
pub struct Report {
    pub command: String,
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
    pub results: Value,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Report { command: command.to_string(), checks: Vec::new(), tables: Vec::new(), results: json!({}) }
    }

    pub fn assert(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check { name: name.to_string(), asserted: true, passed, detail });
    }

    pub fn report(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check { name: name.to_string(), asserted: false, passed, detail });
    }

    /// All asserted checks hold.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| !c.asserted || c.passed)
    }

    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| c.asserted && !c.passed)
    }

    pub fn summary(&self) -> Value {
        json!({
            "command": self.command,
            "passed": self.passed(),
            "checks": self.checks,
            "results": self.results,
        })
    }

    /// Write the tables and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for t in &self.tables {
            let mut w =
                csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(dir.join(&t.file))?;
            w.write_record(&t.header)?;
            for r in &t.rows {
                w.write_record(r)?;
            }
            w.flush()?;
        }
        let mut text = serde_json::to_string_pretty(&self.summary()).expect("summary serializes");
        text.push('\n');
        std::fs::write(dir.join("summary.json"), text)
    }
}
