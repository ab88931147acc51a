use std::fs::{File, OpenOptions};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const LOCK_FILE: &str = ".lock";

/// Exclusive advisory lock on `<project>/.lock`, released on drop (and by
/// the kernel if the process dies).
#[derive(Debug)]
pub(crate) struct LockGuard {
    _file: File,
    #[allow(dead_code)]
    path: PathBuf,
}

impl LockGuard {
    #[cfg(unix)]
    pub(crate) fn acquire(root: &Path) -> Result<Self> {
        use std::io::Write;
        use std::os::unix::io::AsRawFd;

        let path = root.join(LOCK_FILE);
        let mut file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)?;
        // SAFETY: flock on a valid, owned descriptor.
        let rc = unsafe { libc::flock(file.as_raw_fd(), libc::LOCK_EX | libc::LOCK_NB) };
        if rc != 0 {
            let err = std::io::Error::last_os_error();
            return match err.raw_os_error() {
                Some(code) if code == libc::EWOULDBLOCK => Err(Error::Locked(root.to_path_buf())),
                _ => Err(err.into()),
            };
        }
        file.set_len(0)?;
        let _ = writeln!(file, "{}", std::process::id());
        Ok(LockGuard { _file: file, path })
    }

    #[cfg(not(unix))]
    pub(crate) fn acquire(root: &Path) -> Result<Self> {
        let path = root.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(file) => Ok(LockGuard { _file: file, path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(root.to_path_buf())),
            Err(e) => Err(e.into()),
        }
    }
}

#[cfg(not(unix))]
impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}
