use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use super::{io_err, PipelineError};

/// Rename, falling back to copy + sync + remove across filesystems.
pub(crate) fn move_file(from: &Path, to: &Path) -> Result<(), PipelineError> {
    if let Some(parent) = to.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    match std::fs::rename(from, to) {
        Ok(()) => Ok(()),
        Err(e) if e.raw_os_error() == Some(18) => {
            // EXDEV
            let tmp = to.with_file_name(format!(
                ".{}.moving",
                to.file_name().map(|n| n.to_string_lossy()).unwrap_or_default()
            ));
            std::fs::copy(from, &tmp).map_err(io_err(&tmp))?;
            std::fs::File::open(&tmp)
                .and_then(|f| f.sync_all())
                .map_err(io_err(&tmp))?;
            std::fs::rename(&tmp, to).map_err(io_err(to))?;
            std::fs::remove_file(from).map_err(io_err(from))
        }
        Err(e) => Err(io_err(from)(e)),
    }
}

/// `dir/name`, or `dir/{stem}.{n}.{ext}` for the first free `n` when the
/// plain name is taken, so nothing already there is overwritten.
pub(crate) fn free_destination(dir: &Path, name: &str) -> PathBuf {
    let plain = dir.join(name);
    if !exists(&plain) {
        return plain;
    }
    let (stem, ext) = match name.rsplit_once('.') {
        Some((s, e)) if !s.is_empty() => (s, Some(e)),
        _ => (name, None),
    };
    (1u32..)
        .map(|n| match ext {
            Some(e) => dir.join(format!("{stem}.{n}.{e}")),
            None => dir.join(format!("{stem}.{n}")),
        })
        .find(|p| !exists(p))
        .expect("unbounded search")
}

fn exists(p: &Path) -> bool {
    match std::fs::symlink_metadata(p) {
        Ok(_) => true,
        Err(e) => e.kind() != ErrorKind::NotFound,
    }
}

/// Move `from` into `dir`, keeping its file name when free.
pub(crate) fn move_into(from: &Path, dir: &Path) -> Result<PathBuf, PipelineError> {
    let name = from
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| PipelineError::MissingFile(from.to_path_buf()))?;
    let to = free_destination(dir, &name);
    move_file(from, &to)?;
    Ok(to)
}

/// Regular, non-hidden files directly inside `dir`, sorted by name.
pub(crate) fn list_files(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let name = entry.file_name();
        if name.to_string_lossy().starts_with('.') {
            continue;
        }
        if entry.file_type().map_err(io_err(dir))?.is_file() {
            out.push(entry.path());
        }
    }
    out.sort();
    Ok(out)
}
