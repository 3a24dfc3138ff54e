//! Output directory handling: a lock per directory and staged stage outputs.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use ecpe_core::{Error, Result};

pub const LOCK_FILE: &str = ".ecpe.lock";

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                let owner = std::fs::read_to_string(&path).unwrap_or_default();
                Err(Error::Config(format!(
                    "{} is locked by process {}; wait for it or delete the lock file if that run is gone",
                    dir.display(),
                    owner.trim()
                )))
            }
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

/// Scratch directory for one stage; [`Staging::commit`] moves it into place,
/// dropping it without commit deletes everything written so far.
pub struct Staging {
    dir: tempfile::TempDir,
    target: PathBuf,
}

impl Staging {
    pub fn new(out: &Path, stage: &str) -> Result<Self> {
        let dir = tempfile::Builder::new()
            .prefix(&format!(".staging-{stage}-"))
            .tempdir_in(out)
            .map_err(|e| Error::io(out, e))?;
        Ok(Self {
            dir,
            target: out.join(stage),
        })
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Replaces the previous output of the stage.
    pub fn commit(self) -> Result<PathBuf> {
        if self.target.exists() {
            std::fs::remove_dir_all(&self.target).map_err(|e| Error::io(&self.target, e))?;
        }
        let target = self.target;
        let staged = self.dir.keep();
        std::fs::rename(&staged, &target).map_err(|e| {
            let _ = std::fs::remove_dir_all(&staged);
            Error::io(&target, e)
        })?;
        Ok(target)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let d = tempfile::tempdir().unwrap();
        let a = OutputLock::acquire(d.path()).unwrap();
        assert!(matches!(OutputLock::acquire(d.path()), Err(Error::Config(_))));
        drop(a);
        OutputLock::acquire(d.path()).unwrap();
    }

    #[test]
    fn staging_commits_or_vanishes() {
        let d = tempfile::tempdir().unwrap();
        let s = Staging::new(d.path(), "prepare").unwrap();
        std::fs::write(s.file("a.txt"), "1").unwrap();
        drop(s);
        assert_eq!(std::fs::read_dir(d.path()).unwrap().count(), 0);

        let s = Staging::new(d.path(), "prepare").unwrap();
        std::fs::write(s.file("a.txt"), "2").unwrap();
        let target = s.commit().unwrap();
        let s = Staging::new(d.path(), "prepare").unwrap();
        std::fs::write(s.file("b.txt"), "3").unwrap();
        s.commit().unwrap();
        assert!(!target.join("a.txt").exists());
        assert_eq!(std::fs::read_to_string(target.join("b.txt")).unwrap(), "3");
    }
}
