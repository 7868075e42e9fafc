use ehi_core::format::canonical_json;
use serde::Serialize;
use serde_json::{json, Map, Value};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Failure that ends a run: `exit` is the process status.
#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub exit: i32,
    pub message: String,
}

impl CliError {
    pub fn input(code: &'static str, message: impl Into<String>) -> Self {
        CliError { code, exit: 2, message: message.into() }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        CliError { code: "internal", exit: 3, message: message.into() }
    }
}

impl From<ehi_core::Error> for CliError {
    fn from(e: ehi_core::Error) -> Self {
        use ehi_core::Error::*;
        let (code, exit) = match &e {
            Parse(_) => ("input-parse", 2),
            UnknownPoint(_) => ("unknown-point", 2),
            InvalidMetric(_) | InvalidNetwork(_) | InvalidArgument(_) => ("input-invalid", 2),
            RecurrentDomain | NotContained => ("bad-domain", 2),
            Precondition(_) => ("precondition", 1),
            Aborted(_) => ("aborted", 1),
        };
        CliError { code, exit, message: e.to_string() }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub struct Report {
    command: &'static str,
    config: Value,
    timings: Vec<(String, f64)>,
    results: Map<String, Value>,
    assertions: Vec<(String, bool)>,
    emit: Vec<String>,
    tables: Vec<(String, String)>,
}

impl Report {
    pub fn new(command: &'static str, config: Value, emit: Vec<String>) -> Self {
        Report { command, config, timings: vec![], results: Map::new(), assertions: vec![], emit, tables: vec![] }
    }

    /// Runs one named stage and records its wall-clock time.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> CliResult<T>) -> CliResult<T> {
        let t = Instant::now();
        let out = f();
        self.timings.push((name.to_string(), t.elapsed().as_secs_f64()));
        out
    }

    pub fn put(&mut self, key: &str, v: impl Serialize) {
        let v = serde_json::to_value(v).expect("results serialize");
        self.results.insert(key.to_string(), v);
    }

    pub fn assert(&mut self, name: &str, pass: bool) {
        self.assertions.push((name.to_string(), pass));
    }

    pub fn pass(&self) -> bool {
        self.assertions.iter().all(|a| a.1)
    }

    pub fn wants(&self, table: &str) -> bool {
        self.emit.iter().any(|t| t == table)
    }

    pub fn table(&mut self, name: &str, body: impl FnOnce() -> String) {
        if self.wants(name) {
            self.tables.push((name.to_string(), body()));
        }
    }

    pub fn to_json(&self, timings: bool) -> String {
        let mut v = json!({
            "tool": "ehi",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "config": self.config,
            "results": Value::Object(self.results.clone()),
            "assertions": self.assertions.iter().map(|(n, p)| json!({"name": n, "pass": p})).collect::<Vec<_>>(),
            "pass": self.pass(),
        });
        if timings {
            v["timings"] = self.timings.iter().map(|(s, t)| json!({"stage": s, "seconds": t})).collect();
        }
        canonical_json(&v) + "\n"
    }

    pub fn write(&self, path: &Path, timings: bool) -> CliResult<()> {
        write_file(path, &self.to_json(timings))?;
        for (name, body) in &self.tables {
            write_file(&table_path(path, name), body)?;
        }
        Ok(())
    }
}

pub fn error_json(command: &str, e: &CliError) -> String {
    let v = json!({
        "tool": "ehi",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "error": {"code": e.code, "message": e.message},
        "pass": false,
    });
    canonical_json(&v) + "\n"
}

/// `report.json` + `psi` → `report.psi.csv`.
pub fn table_path(report: &Path, name: &str) -> PathBuf {
    let stem = report.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "ehi-report".into());
    report.with_file_name(format!("{stem}.{name}.csv"))
}

pub fn write_file(path: &Path, body: &str) -> CliResult<()> {
    std::fs::write(path, body).map_err(|e| CliError::input("output-unwritable", format!("{}: {e}", path.display())))
}

pub fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::input("input-not-found", format!("{}: no such file", path.display())),
        _ => CliError::input("input-unreadable", format!("{}: {e}", path.display())),
    })
}

/// CSV with a header row; values are already formatted.
pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}
