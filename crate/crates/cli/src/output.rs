use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use idlora_core::{Error, Result};
use serde::Serialize;
use tempfile::NamedTempFile;

/// Every JSON report starts with this block.
#[derive(Debug, Serialize)]
pub struct Provenance<'a, C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub seed: u64,
    pub config: &'a C,
}

#[derive(Debug, Serialize)]
struct Envelope<'a, C: Serialize, R: Serialize> {
    provenance: Provenance<'a, C>,
    report: &'a R,
}

pub fn provenance<'a, C: Serialize>(command: &'a str, seed: u64, config: &'a C) -> Provenance<'a, C> {
    Provenance { tool: "idlora", version: env!("CARGO_PKG_VERSION"), command, seed, config }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_json<C: Serialize, R: Serialize>(path: &Path, prov: Provenance<'_, C>, report: &R) -> Result<()> {
    let env = Envelope { provenance: prov, report };
    let mut text = serde_json::to_string_pretty(&env).map_err(|e| Error::Format(format!("json: {e}")))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| Error::Format(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(format!("csv: {e}")))?;
    write_atomic(path, &bytes)
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))
}

/// Inputs must exist and outputs must land in an existing directory.
pub fn check_paths(inputs: &[&Path], outputs: &[Option<&PathBuf>]) -> Result<()> {
    for p in inputs {
        if !p.is_file() {
            return Err(Error::Input(format!("input file {} does not exist", p.display())));
        }
    }
    for p in outputs.iter().flatten() {
        let dir = match p.parent() {
            Some(d) if !d.as_os_str().is_empty() => d,
            _ => Path::new("."),
        };
        if !dir.is_dir() {
            return Err(Error::Input(format!("output directory {} does not exist", dir.display())));
        }
    }
    Ok(())
}
