//! CSV output with `#` metadata header lines.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::config::ExperimentConfig;
use crate::error::CliError;

/// Formats a float for output: full round-trip precision in scientific form.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Debug, Default)]
pub struct Table {
    meta: Vec<(String, String)>,
    columns: Vec<&'static str>,
    rows: Vec<Vec<String>>,
    trailer: Vec<String>,
}

impl Table {
    pub fn new(command: &str, config: &ExperimentConfig, columns: &[&'static str]) -> Self {
        let mut t = Self {
            columns: columns.to_vec(),
            ..Default::default()
        };
        t.meta("command", command);
        t.meta("config_sha256", config.hash());
        t.meta("config", config.canonical());
        t
    }

    pub fn meta(&mut self, key: &str, value: impl Into<String>) {
        self.meta.push((key.into(), value.into()));
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells);
    }

    /// A `# key value` line written after the rows.
    pub fn trailer(&mut self, line: impl Into<String>) {
        self.trailer.push(line.into());
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(s, "# {k}: {v}");
        }
        let _ = writeln!(s, "{}", self.columns.join(","));
        for r in &self.rows {
            let _ = writeln!(s, "{}", r.join(","));
        }
        for t in &self.trailer {
            let _ = writeln!(s, "# {t}");
        }
        s
    }

    pub fn emit(&self, out: Option<&Path>) -> Result<(), CliError> {
        let text = self.render();
        match out {
            Some(path) => std::fs::write(path, text)
                .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display()))),
            None => std::io::stdout()
                .lock()
                .write_all(text.as_bytes())
                .map_err(|e| CliError::Io(format!("cannot write to stdout: {e}"))),
        }
    }
}
