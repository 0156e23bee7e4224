use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ply::{parse_ply, write_ply, PlyError, PlyForm};
use super::{PersonSequence, SequenceError};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest parse error: {0}")]
    Parse(String),
    #[error("unsupported manifest version {0}")]
    Version(u32),
    #[error("duplicate sequence_id `{0}`")]
    DuplicateSequenceId(String),
    #[error("sequence `{id}` points to missing path {path}")]
    MissingFile { id: String, path: PathBuf },
    #[error("entry `{0}` has an empty identity_id, surgery_id or sequence_id")]
    EmptyField(String),
    #[error("entry `{id}` has invalid fps {fps}")]
    BadFps { id: String, fps: f64 },
    #[error("sequence `{id}`: no frame_%06d.ply files in {path}")]
    NoFrames { id: String, path: PathBuf },
    #[error("sequence `{id}` frame {frame}: {source}")]
    Frame {
        id: String,
        frame: usize,
        source: PlyError,
    },
    #[error("sequence `{id}`: {source}")]
    Sequence { id: String, source: SequenceError },
    #[error("io error on {path}: {message}")]
    Io { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sequence_id: String,
    pub identity_id: String,
    pub surgery_id: String,
    pub file_path: String,
    pub fps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub v: u32,
    pub mode_tag: String,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(mode_tag: impl Into<String>, entries: Vec<ManifestEntry>) -> Self {
        Self {
            v: MANIFEST_VERSION,
            mode_tag: mode_tag.into(),
            entries,
        }
    }

    /// Check id uniqueness and field sanity without touching the filesystem.
    pub fn check_entries(&self) -> Result<(), ManifestError> {
        if self.v != MANIFEST_VERSION {
            return Err(ManifestError::Version(self.v));
        }
        let mut seen = HashSet::new();
        for e in &self.entries {
            if e.sequence_id.is_empty() || e.identity_id.is_empty() || e.surgery_id.is_empty() {
                return Err(ManifestError::EmptyField(e.sequence_id.clone()));
            }
            if !(e.fps.is_finite() && e.fps > 0.0) {
                return Err(ManifestError::BadFps {
                    id: e.sequence_id.clone(),
                    fps: e.fps,
                });
            }
            if !seen.insert(e.sequence_id.as_str()) {
                return Err(ManifestError::DuplicateSequenceId(e.sequence_id.clone()));
            }
        }
        Ok(())
    }

    /// Sorted, deduplicated surgery ids.
    pub fn surgeries(&self) -> Vec<String> {
        let mut s: Vec<String> = self.entries.iter().map(|e| e.surgery_id.clone()).collect();
        s.sort();
        s.dedup();
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

pub fn resolve(base_dir: &Path, file_path: &str) -> PathBuf {
    let p = Path::new(file_path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

/// Parse and validate a manifest. Relative `file_path`s resolve against
/// `base_dir` and must exist.
pub fn load_manifest(text: &str, base_dir: &Path) -> Result<DatasetManifest, ManifestError> {
    let manifest: DatasetManifest =
        serde_json::from_str(text).map_err(|e| ManifestError::Parse(e.to_string()))?;
    manifest.check_entries()?;
    for e in &manifest.entries {
        let path = resolve(base_dir, &e.file_path);
        if !path.exists() {
            return Err(ManifestError::MissingFile {
                id: e.sequence_id.clone(),
                path,
            });
        }
    }
    Ok(manifest)
}

/// Read all `frame_%06d.ply` files of one entry in index order. Frame `k`
/// gets timestamp `k / fps`.
pub fn load_sequence(entry: &ManifestEntry, base_dir: &Path) -> Result<PersonSequence, ManifestError> {
    let dir = resolve(base_dir, &entry.file_path);
    let io_err = |e: std::io::Error| ManifestError::Io {
        path: dir.clone(),
        message: e.to_string(),
    };
    let mut indexed = Vec::new();
    for item in std::fs::read_dir(&dir).map_err(io_err)? {
        let item = item.map_err(io_err)?;
        let name = item.file_name().to_string_lossy().into_owned();
        let idx = name
            .strip_prefix("frame_")
            .and_then(|s| s.strip_suffix(".ply"))
            .filter(|s| s.len() == 6)
            .and_then(|s| s.parse::<usize>().ok());
        if let Some(idx) = idx {
            indexed.push((idx, item.path()));
        }
    }
    if indexed.is_empty() {
        return Err(ManifestError::NoFrames {
            id: entry.sequence_id.clone(),
            path: dir,
        });
    }
    indexed.sort();

    let mut frames = Vec::with_capacity(indexed.len());
    for (k, (idx, path)) in indexed.iter().enumerate() {
        let bytes = std::fs::read(path).map_err(|e| ManifestError::Io {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let mut frame = parse_ply(&bytes).map_err(|source| ManifestError::Frame {
            id: entry.sequence_id.clone(),
            frame: *idx,
            source,
        })?;
        frame.timestamp_s = k as f64 / entry.fps;
        frames.push(frame);
    }
    let seq = PersonSequence {
        frames,
        identity_id: entry.identity_id.clone(),
        surgery_id: entry.surgery_id.clone(),
        sequence_id: entry.sequence_id.clone(),
        fps: entry.fps,
    };
    seq.validate().map_err(|source| ManifestError::Sequence {
        id: entry.sequence_id.clone(),
        source,
    })?;
    Ok(seq)
}

/// Write every frame of `seq` as `dir/frame_%06d.ply`, creating `dir`.
pub fn save_sequence(seq: &PersonSequence, dir: &Path, form: PlyForm) -> Result<(), ManifestError> {
    let io_err = |path: &Path, e: std::io::Error| ManifestError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for (k, frame) in seq.frames.iter().enumerate() {
        let bytes = write_ply(frame, form).map_err(|e| ManifestError::Sequence {
            id: seq.sequence_id.clone(),
            source: SequenceError::Frame { index: k, source: e },
        })?;
        let path = dir.join(format!("frame_{k:06}.ply"));
        std::fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, path: &str) -> String {
        format!(
            r#"{{"sequence_id":"{id}","identity_id":"p1","surgery_id":"S01","file_path":"{path}","fps":30}}"#
        )
    }

    #[test]
    fn two_entries() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("a")).unwrap();
        std::fs::create_dir(dir.path().join("b")).unwrap();
        let text = format!(
            r#"{{"v":1,"mode_tag":"real","entries":[{},{}]}}"#,
            entry("s1", "a"),
            entry("s2", "b")
        );
        let m = load_manifest(&text, dir.path()).unwrap();
        assert_eq!(m.entries.len(), 2);
        assert_eq!(m.mode_tag, "real");
    }

    #[test]
    fn duplicate_sequence_id() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("a")).unwrap();
        let text = format!(
            r#"{{"v":1,"mode_tag":"x","entries":[{},{}]}}"#,
            entry("s1", "a"),
            entry("s1", "a")
        );
        let err = load_manifest(&text, dir.path()).unwrap_err();
        assert!(matches!(err, ManifestError::DuplicateSequenceId(id) if id == "s1"));
    }

    #[test]
    fn missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(r#"{{"v":1,"mode_tag":"x","entries":[{}]}}"#, entry("s1", "nope"));
        let err = load_manifest(&text, dir.path()).unwrap_err();
        assert!(matches!(err, ManifestError::MissingFile { .. }));
    }

    #[test]
    fn parse_error_and_version() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_manifest("{not json", dir.path()),
            Err(ManifestError::Parse(_))
        ));
        assert!(matches!(
            load_manifest(r#"{"v":2,"mode_tag":"x","entries":[]}"#, dir.path()),
            Err(ManifestError::Version(2))
        ));
    }
}
