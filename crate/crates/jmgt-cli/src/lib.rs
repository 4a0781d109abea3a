//! Scenario-driven experiment runner.

pub mod presets;
pub mod scenario;

use scenario::Scenario;
use serde_json::json;
use std::fs;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("scenario invalid:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error("numerical failure in {context}: {source}")]
    Numerical { context: &'static str, source: jmgt::Error },
    #[error("i/o: {0}")]
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Validation(_) => EXIT_VALIDATION,
            RunError::Numerical { .. } => EXIT_NUMERICAL,
            RunError::Io(_) => EXIT_IO,
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

impl From<csv::Error> for RunError {
    fn from(e: csv::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

/// Reads a scenario file and applies the command-line overrides.
pub fn load(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<Scenario, RunError> {
    let text = fs::read_to_string(path).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
    let mut sc = Scenario::from_toml(&text).map_err(|e| RunError::Validation(vec![e.trim().to_string()]))?;
    if let Some(s) = seed {
        sc.seed = s;
    }
    if let Some(o) = out {
        sc.output = o;
    }
    Ok(sc)
}

/// Runs the scenario's preset and writes its CSV tables and `manifest.json`
/// into the output directory. Returns the paths written.
pub fn run(sc: &Scenario) -> Result<Vec<PathBuf>, RunError> {
    let violations = sc.violations();
    if !violations.is_empty() {
        return Err(RunError::Validation(violations));
    }
    let outcome = presets::run(sc)?;
    fs::create_dir_all(&sc.output)?;
    let mut written = vec![];
    for t in &outcome.tables {
        let path = sc.output.join(t.file);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(&t.header)?;
        for r in &t.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        written.push(path);
    }
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "preset": sc.preset.name(),
        "scenario_hash": sc.hash(),
        "seed": sc.seed,
        "artifacts": outcome.tables.iter().map(|t| t.file).collect::<Vec<_>>(),
        "summary": outcome.summary,
        "scenario": sc,
    });
    let path = sc.output.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n")?;
    written.push(path);
    Ok(written)
}
