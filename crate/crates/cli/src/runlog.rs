//! `run.log.jsonl` records and the output-directory lock.

use std::fs::{self, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Serialize)]
pub(crate) struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Serialize)]
pub(crate) struct RunRecord<'a> {
    pub stage: &'a str,
    pub status: &'a str,
    pub frames: &'a [u32],
    pub wall_ms: f64,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub(crate) fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut f = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Digests of `paths`, shown relative to `root` when below it. Files that
/// vanished are skipped.
pub(crate) fn digests(root: &Path, paths: &[PathBuf]) -> Vec<FileDigest> {
    let mut sorted: Vec<&PathBuf> = paths.iter().collect();
    sorted.sort();
    sorted.dedup();
    sorted
        .into_iter()
        .filter_map(|p| {
            let sha256 = sha256_file(p).ok()?;
            let shown = p.strip_prefix(root).unwrap_or(p);
            Some(FileDigest {
                path: shown.to_string_lossy().into_owned(),
                sha256,
            })
        })
        .collect()
}

pub(crate) fn append(log: &Path, record: &RunRecord) -> std::io::Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(log)?;
    let line = serde_json::to_string(record).map_err(std::io::Error::other)?;
    writeln!(f, "{line}")
}

/// Held for the duration of one stage; removes the lock file on drop.
pub(crate) struct DirLock {
    path: PathBuf,
}

impl DirLock {
    /// `Ok(None)` when another holder exists.
    pub fn acquire(path: &Path) -> std::io::Result<Option<DirLock>> {
        match OpenOptions::new().write(true).create_new(true).open(path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(Some(DirLock { path: path.to_path_buf() }))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Ok(None),
            Err(e) => Err(e),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
