//! Result files: CSV for traces and sweeps, JSON for solutions and reports.
//! Floats are written with the shortest round-trip formatting, so re-running
//! a command with the same configuration and seed reproduces the bytes
//! exactly (wall-clock columns aside).

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

/// Write `header` plus one line per row and report the path on stdout.
pub fn write_csv(dir: &Path, name: &str, header: &str, rows: &[String]) -> Result<PathBuf> {
    let mut text = String::with_capacity(16 * rows.len());
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    write_file(dir, name, &text)
}

/// Write a pretty-printed JSON document and report the path on stdout.
pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(dir, name, &text)
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(path)
}
