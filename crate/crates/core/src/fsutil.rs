use std::fs::{self, File};
use std::path::{Path, PathBuf};

use crate::error::{Result, StylerError};

fn temp_path(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp-{}", std::process::id()))
}

/// Writes through a sibling temp file and renames it into place, so a
/// failed write never leaves a partial file at `path`.
pub fn write_atomic(path: &Path, write: impl FnOnce(File) -> Result<()>) -> Result<()> {
    let tmp = temp_path(path);
    let file = File::create(&tmp).map_err(|e| StylerError::io(&tmp, e))?;
    if let Err(e) = write(file) {
        let _ = fs::remove_file(&tmp);
        return Err(e);
    }
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        StylerError::io(path, e)
    })
}

pub fn write_bytes_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    use std::io::Write;
    write_atomic(path, |mut f| {
        f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| StylerError::io(path, e))
    })
}
