use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::io(path, std::io::Error::other("not a file path")))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn parse_field(
    path: &Path,
    row: usize,
    column: &str,
    cell: Option<&str>,
) -> Result<f64> {
    let cell = cell.ok_or_else(|| Error::Parse {
        path: path.into(),
        row,
        column: column.into(),
        message: "missing value".into(),
    })?;
    cell.trim().parse::<f64>().map_err(|e| Error::Parse {
        path: path.into(),
        row,
        column: column.into(),
        message: format!("'{cell}': {e}"),
    })
}

/// Shortest round-trip formatting used in every CSV the crate writes.
pub(crate) fn fmt_f64(v: f64) -> String {
    v.to_string()
}
