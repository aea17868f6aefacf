//! Experiment harness for the residual hybrid quantum-classical models:
//! TOML configs, an experiment registry, results tables and a fast
//! self-verification suite.

pub mod config;
pub mod registry;
pub mod table;
pub mod verify;

use std::fs;
use std::path::Path;
use std::process::Command;

use table::ResultsTable;

/// Short hash of the checked-out commit, or "unknown".
pub fn git_hash() -> String {
    Command::new("git")
        .args(["rev-parse", "--short=12", "HEAD"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

/// Writes `<stem>.csv`, `<stem>.md` and `<stem>.json` under `dir`.
pub fn emit_table(table: &ResultsTable, dir: &Path, stem: &str) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(format!("{stem}.csv")), table.to_csv())?;
    fs::write(dir.join(format!("{stem}.md")), table.to_markdown())?;
    let json = serde_json::to_string_pretty(table).map_err(std::io::Error::other)?;
    fs::write(dir.join(format!("{stem}.json")), json)?;
    Ok(())
}
