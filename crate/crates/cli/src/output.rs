use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

/// Collects output files in memory and writes them only once every one has
/// been produced, so a failing command leaves no partial results behind.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Self {
        Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    /// `name` is relative to the output directory unless absolute.
    pub fn add(&mut self, name: impl AsRef<Path>, bytes: Vec<u8>) {
        self.files.push((self.dir.join(name), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    pub fn add_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        for row in rows {
            writer.serialize(row)?;
        }
        self.add(name, writer.into_inner().context("flushing csv")?);
        Ok(())
    }

    /// Writes every file through a temporary sibling and a rename. On error
    /// the files already written by this call are removed again.
    pub fn commit(self) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))?;
        let mut written = Vec::new();
        for (path, bytes) in self.files {
            if let Err(e) = write_atomic(&path, &bytes) {
                for p in &written {
                    let _ = fs::remove_file(p);
                }
                return Err(e);
            }
            written.push(path);
        }
        Ok(written)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    let result = fs::write(&tmp, bytes).and_then(|_| fs::rename(&tmp, path));
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commit_writes_everything() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Outputs::new(&dir.path().join("nested"));
        out.add("a.txt", b"one".to_vec());
        out.add_csv("b.csv", &[(1, 2.5)]).unwrap();
        let written = out.commit().unwrap();
        assert_eq!(written.len(), 2);
        assert_eq!(fs::read_to_string(&written[1]).unwrap(), "1,2.5\n");
        assert!(!dir.path().join("nested/a.txt.partial").exists());
    }

    #[test]
    fn failed_commit_removes_earlier_files() {
        let dir = tempfile::tempdir().unwrap();
        // a directory in the way makes the second write fail
        fs::create_dir_all(dir.path().join("blocked")).unwrap();
        fs::create_dir_all(dir.path().join("blocked.partial")).unwrap();
        let mut out = Outputs::new(dir.path());
        out.add("first.txt", b"x".to_vec());
        out.add("blocked", b"y".to_vec());
        assert!(out.commit().is_err());
        assert!(!dir.path().join("first.txt").exists());
    }
}
