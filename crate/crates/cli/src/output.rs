use std::io::Write;
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use crate::error::CliError;

fn output_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Output(format!("{}: {e}", path.display()))
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory followed by a rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| output_err(dir, e))?;
    tmp.write_all(contents).map_err(|e| output_err(path, e))?;
    tmp.as_file().sync_all().map_err(|e| output_err(path, e))?;
    tmp.persist(path).map_err(|e| output_err(path, e.error))?;
    Ok(())
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| output_err(dir, e))
}

/// CSV from a header and rows of already formatted cells.
pub fn csv_bytes(
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::Output(e.to_string());
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(&row).map_err(fail)?;
    }
    w.into_inner().map_err(|e| CliError::Output(e.to_string()))
}

/// Collects written paths for reporting.
#[derive(Debug, Default)]
pub struct Written(pub Vec<PathBuf>);

impl Written {
    pub fn file(&mut self, dir: &Path, name: &str, contents: &[u8]) -> Result<(), CliError> {
        let path = dir.join(name);
        write_atomic(&path, contents)?;
        self.0.push(path);
        Ok(())
    }
}
