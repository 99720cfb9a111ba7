use std::fs::OpenOptions;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use super::{io_err, PipelineError};

/// Exclusive batch lock: a file holding the owner's pid, removed on drop.
/// A lock whose owner is no longer running is taken over.
#[derive(Debug)]
pub struct BatchLock {
    path: PathBuf,
}

fn process_alive(pid: u32) -> bool {
    if cfg!(target_os = "linux") {
        Path::new("/proc").join(pid.to_string()).exists()
    } else {
        true
    }
}

impl BatchLock {
    pub fn acquire(path: &Path) -> Result<Self, PipelineError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        for _ in 0..2 {
            match OpenOptions::new().write(true).create_new(true).open(path) {
                Ok(mut f) => {
                    f.write_all(std::process::id().to_string().as_bytes())
                        .map_err(io_err(path))?;
                    return Ok(BatchLock { path: path.to_path_buf() });
                }
                Err(e) if e.kind() == ErrorKind::AlreadyExists => {
                    let owner = std::fs::read_to_string(path)
                        .ok()
                        .and_then(|s| s.trim().parse::<u32>().ok());
                    match owner {
                        Some(pid) if process_alive(pid) => {
                            return Err(PipelineError::Locked {
                                path: path.to_path_buf(),
                                pid,
                            })
                        }
                        _ => {
                            tracing::warn!(lock = %path.display(), "removing stale pipeline lock");
                            match std::fs::remove_file(path) {
                                Ok(()) => {}
                                Err(e) if e.kind() == ErrorKind::NotFound => {}
                                Err(e) => return Err(io_err(path)(e)),
                            }
                        }
                    }
                }
                Err(e) => return Err(io_err(path)(e)),
            }
        }
        Err(PipelineError::Locked {
            path: path.to_path_buf(),
            pid: 0,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl Drop for BatchLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}
