use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn create(path: &Path) -> CliResult<fs::File> {
    fs::File::create(path).map_err(|e| CliError::io(path, e))
}

/// Writes `rows` with a header taken from the row type.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::Input {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    }
}

/// Copy of the effective configuration next to the results.
pub fn write_config_echo(dir: &Path, cfg: &ExperimentConfig) -> CliResult<PathBuf> {
    let path = dir.join("config_echo.toml");
    let text = format!(
        "# config hash {}\n{}",
        cfg.hash(),
        toml::to_string(cfg).expect("config serializes")
    );
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

/// `path` with timing columns (names ending in `_ms`) removed, for
/// comparing runs.
pub fn csv_without_timing(path: &Path) -> CliResult<Vec<Vec<String>>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(String::from)
        .collect();
    let keep: Vec<usize> = (0..header.len())
        .filter(|&i| !header[i].ends_with("_ms"))
        .collect();
    let mut out = vec![keep.iter().map(|&i| header[i].clone()).collect()];
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        out.push(keep.iter().map(|&i| rec[i].to_string()).collect());
    }
    Ok(out)
}
