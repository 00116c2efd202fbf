//! Task working-directory observation.
//!
//! Role classification:
//! - hidden entries (any dot-prefixed path component) are `unknown`;
//! - symbolic links are `input` (staged);
//! - regular files modified before the task started are `input`;
//! - all other regular files are `output`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use crate::time::Timestamp;

pub const DEFAULT_CHECKSUM_CAP: u64 = 64 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileRole {
    Input,
    Output,
    Unknown,
}

impl FileRole {
    pub fn as_str(self) -> &'static str {
        match self {
            FileRole::Input => "input",
            FileRole::Output => "output",
            FileRole::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub size_bytes: u64,
    pub mtime: Timestamp,
    /// `sha256:<hex>` digest of exactly `size_bytes` bytes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checksum: Option<String>,
    pub role: FileRole,
    pub task_id: String,
    /// Canonical target for symbolic links.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link_target: Option<String>,
}

impl FileRecord {
    /// The path other tasks see this file under: the link target for staged
    /// inputs, the path itself otherwise.
    pub fn identity(&self) -> &str {
        self.link_target.as_deref().unwrap_or(&self.path)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanPolicy {
    pub checksum: bool,
    pub checksum_cap_bytes: u64,
    /// Files with an mtime before this instant count as inputs.
    pub task_started_at: Option<Timestamp>,
}

impl Default for ScanPolicy {
    fn default() -> Self {
        ScanPolicy { checksum: false, checksum_cap_bytes: DEFAULT_CHECKSUM_CAP, task_started_at: None }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScanError {
    #[error("directory missing: {0}")]
    DirectoryMissing(PathBuf),
    #[error("permission denied: {0}")]
    PermissionDenied(PathBuf),
    #[error("i/o error at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

#[derive(Debug, Default)]
pub struct ScanOutput {
    pub records: Vec<FileRecord>,
    /// Per-entry failures; the scan continued past each of them.
    pub diagnostics: Vec<ScanError>,
}

fn entry_error(path: &Path, err: io::Error) -> ScanError {
    if err.kind() == io::ErrorKind::PermissionDenied {
        ScanError::PermissionDenied(path.to_path_buf())
    } else {
        ScanError::Io { path: path.to_path_buf(), source: err }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn checksum_file(path: &Path, size: u64) -> io::Result<String> {
    let mut hasher = Sha256::new();
    let mut reader = File::open(path)?.take(size);
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = reader.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("sha256:{}", hex::encode(hasher.finalize())))
}

fn is_hidden(rel: &Path) -> bool {
    rel.components().any(|c| c.as_os_str().to_string_lossy().starts_with('.'))
}

/// Scan `dir` recursively and describe every regular file (and every
/// symbolic link to a regular file) as seen by task `task_id`.
pub fn scan_workdir(dir: &Path, task_id: &str, policy: &ScanPolicy) -> Result<ScanOutput, ScanError> {
    let root = match fs::canonicalize(dir) {
        Ok(p) if p.is_dir() => p,
        Ok(_) => return Err(ScanError::DirectoryMissing(dir.to_path_buf())),
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(ScanError::DirectoryMissing(dir.to_path_buf())),
        Err(e) => return Err(entry_error(dir, e)),
    };

    let mut out = ScanOutput::default();
    let walker = WalkDir::new(&root).follow_links(false).sort_by_file_name().min_depth(1);
    for entry in walker {
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                let path = e.path().map(Path::to_path_buf).unwrap_or_else(|| root.clone());
                let io_err = e.into_io_error().unwrap_or_else(|| io::Error::other("walk error"));
                out.diagnostics.push(entry_error(&path, io_err));
                continue;
            }
        };
        let path = entry.path();
        let rel = path.strip_prefix(&root).unwrap_or(path);
        let ft = entry.file_type();

        let (meta, link_target) = if ft.is_symlink() {
            // Only links that resolve to regular files are recorded.
            match fs::metadata(path) {
                Ok(m) if m.is_file() => {
                    let target = fs::canonicalize(path).map(|p| p.to_string_lossy().into_owned()).ok();
                    (m, target)
                }
                Ok(_) => continue,
                Err(e) => {
                    out.diagnostics.push(entry_error(path, e));
                    continue;
                }
            }
        } else if ft.is_file() {
            match entry.metadata() {
                Ok(m) => (m, None),
                Err(e) => {
                    let io_err = e.into_io_error().unwrap_or_else(|| io::Error::other("metadata error"));
                    out.diagnostics.push(entry_error(path, io_err));
                    continue;
                }
            }
        } else {
            continue;
        };

        let size = meta.len();
        let mtime = meta.modified().map(Timestamp::from_system_time).unwrap_or(Timestamp::EPOCH);
        let role = if is_hidden(rel) {
            FileRole::Unknown
        } else if ft.is_symlink() {
            FileRole::Input
        } else {
            match policy.task_started_at {
                Some(start) if mtime < start => FileRole::Input,
                _ => FileRole::Output,
            }
        };
        let checksum = if policy.checksum && size <= policy.checksum_cap_bytes {
            match checksum_file(path, size) {
                Ok(c) => Some(c),
                Err(e) => {
                    out.diagnostics.push(entry_error(path, e));
                    None
                }
            }
        } else {
            None
        };

        out.records.push(FileRecord {
            path: path.to_string_lossy().into_owned(),
            size_bytes: size,
            mtime,
            checksum,
            role,
            task_id: task_id.to_owned(),
            link_target,
        });
    }
    out.records.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SnapshotDiff {
    pub created: Vec<FileRecord>,
    pub modified: Vec<FileRecord>,
    pub removed: Vec<FileRecord>,
}

impl SnapshotDiff {
    pub fn is_empty(&self) -> bool {
        self.created.is_empty() && self.modified.is_empty() && self.removed.is_empty()
    }
}

fn differs(a: &FileRecord, b: &FileRecord) -> bool {
    if a.size_bytes != b.size_bytes || a.mtime != b.mtime {
        return true;
    }
    matches!((&a.checksum, &b.checksum), (Some(x), Some(y)) if x != y)
}

/// Compare two scans of the same root. `created` and `modified` carry the
/// `after` records, `removed` the `before` ones; each list is path-ordered.
pub fn diff_snapshots(before: &[FileRecord], after: &[FileRecord]) -> SnapshotDiff {
    let old: BTreeMap<&str, &FileRecord> = before.iter().map(|r| (r.path.as_str(), r)).collect();
    let new: BTreeMap<&str, &FileRecord> = after.iter().map(|r| (r.path.as_str(), r)).collect();
    let mut diff = SnapshotDiff::default();
    for (path, rec) in &new {
        match old.get(path) {
            None => diff.created.push((*rec).clone()),
            Some(prev) if differs(prev, rec) => diff.modified.push((*rec).clone()),
            Some(_) => {}
        }
    }
    for (path, rec) in &old {
        if !new.contains_key(path) {
            diff.removed.push((*rec).clone());
        }
    }
    diff
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(path: &str, size: u64, mtime: i64) -> FileRecord {
        FileRecord {
            path: path.into(),
            size_bytes: size,
            mtime: Timestamp::from_millis(mtime),
            checksum: None,
            role: FileRole::Unknown,
            task_id: "t".into(),
            link_target: None,
        }
    }

    #[test]
    fn empty_directory() {
        let dir = tempfile::tempdir().unwrap();
        let out = scan_workdir(dir.path(), "t1", &ScanPolicy::default()).unwrap();
        assert!(out.records.is_empty());
        assert!(out.diagnostics.is_empty());
    }

    #[test]
    fn missing_directory() {
        let err = scan_workdir(Path::new("/definitely/not/here"), "t1", &ScanPolicy::default()).unwrap_err();
        assert!(matches!(err, ScanError::DirectoryMissing(_)));
    }

    #[test]
    fn abc_checksum() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("abc.txt"), b"abc").unwrap();
        let policy = ScanPolicy { checksum: true, ..Default::default() };
        let out = scan_workdir(dir.path(), "t1", &policy).unwrap();
        assert_eq!(out.records.len(), 1);
        let r = &out.records[0];
        assert_eq!(r.size_bytes, 3);
        // FIPS 180-2 test vector for "abc".
        assert_eq!(
            r.checksum.as_deref(),
            Some("sha256:ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad")
        );
        assert_eq!(r.task_id, "t1");
    }

    #[test]
    fn checksum_cap_skips_large_files() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("big"), vec![0u8; 100]).unwrap();
        let policy = ScanPolicy { checksum: true, checksum_cap_bytes: 99, ..Default::default() };
        let out = scan_workdir(dir.path(), "t1", &policy).unwrap();
        assert_eq!(out.records[0].checksum, None);
    }

    #[cfg(unix)]
    #[test]
    fn classification_rules() {
        let foreign = tempfile::tempdir().unwrap();
        fs::write(foreign.path().join("reads.fq"), b"ACGT").unwrap();
        let work = tempfile::tempdir().unwrap();
        std::os::unix::fs::symlink(foreign.path().join("reads.fq"), work.path().join("reads.fq")).unwrap();
        fs::write(work.path().join("out.bam"), b"bam").unwrap();
        fs::write(work.path().join(".command.log"), b"log").unwrap();
        fs::create_dir(work.path().join("sub")).unwrap();
        fs::write(work.path().join("sub/part.txt"), b"p").unwrap();

        let out = scan_workdir(work.path(), "t7", &ScanPolicy::default()).unwrap();
        let roles: Vec<(String, FileRole)> = out
            .records
            .iter()
            .map(|r| (Path::new(&r.path).file_name().unwrap().to_string_lossy().into_owned(), r.role))
            .collect();
        assert_eq!(
            roles,
            vec![
                (".command.log".into(), FileRole::Unknown),
                ("out.bam".into(), FileRole::Output),
                ("reads.fq".into(), FileRole::Input),
                ("part.txt".into(), FileRole::Output),
            ]
        );
        let link = out.records.iter().find(|r| r.path.ends_with("reads.fq")).unwrap();
        assert_eq!(link.size_bytes, 4);
        let target = fs::canonicalize(foreign.path().join("reads.fq")).unwrap();
        assert_eq!(link.link_target.as_deref(), Some(target.to_str().unwrap()));
    }

    #[test]
    fn preexisting_files_are_inputs() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("old"), b"x").unwrap();
        let policy = ScanPolicy { task_started_at: Some(Timestamp::now().plus_millis(60_000)), ..Default::default() };
        let out = scan_workdir(dir.path(), "t1", &policy).unwrap();
        assert_eq!(out.records[0].role, FileRole::Input);
    }

    #[test]
    fn rescan_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a"), b"1").unwrap();
        fs::write(dir.path().join("b"), b"22").unwrap();
        let policy = ScanPolicy { checksum: true, ..Default::default() };
        let a = scan_workdir(dir.path(), "t", &policy).unwrap().records;
        let b = scan_workdir(dir.path(), "t", &policy).unwrap().records;
        assert_eq!(a, b);
    }

    #[test]
    fn diff_identity_and_creation() {
        let x = vec![rec("a", 1, 0), rec("b", 2, 0)];
        assert!(diff_snapshots(&x, &x).is_empty());
        let mut y = x.clone();
        y.push(rec("c", 3, 5));
        let d = diff_snapshots(&x, &y);
        assert_eq!(d.created.len(), 1);
        assert_eq!(d.created[0].path, "c");
        assert!(d.modified.is_empty() && d.removed.is_empty());
    }

    #[test]
    fn diff_checksum_only_when_both_present() {
        let mut a = rec("a", 1, 0);
        let mut b = a.clone();
        b.checksum = Some("sha256:00".into());
        assert!(diff_snapshots(&[a.clone()], &[b.clone()]).is_empty());
        a.checksum = Some("sha256:11".into());
        assert_eq!(diff_snapshots(&[a], &[b]).modified.len(), 1);
    }
}
