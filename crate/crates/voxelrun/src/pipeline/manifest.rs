//! The `hashes.json` checksum manifest: a flat JSON object mapping
//! repository-relative paths to lowercase sha256 hex digests.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::PipelineError;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HashManifest {
    entries: BTreeMap<String, String>,
}

impl HashManifest {
    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn digest_for(&self, path: &str) -> Option<&str> {
        self.entries.get(path).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_json(&self) -> String {
        let mut out = String::from("{\n");
        for (i, (path, digest)) in self.entries.iter().enumerate() {
            out.push_str(&format!(
                "  {}: {}{}\n",
                serde_json::to_string(path).expect("strings always serialize"),
                serde_json::to_string(digest).expect("strings always serialize"),
                if i + 1 < self.entries.len() { "," } else { "" }
            ));
        }
        out.push_str("}\n");
        out
    }
}

fn check_entry(path: &str, digest: &str) -> Result<(), PipelineError> {
    let bad = |reason: String| PipelineError::MalformedManifest { reason };
    if digest.len() != 64 || !digest.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
        return Err(bad(format!(
            "digest for {path:?} is not 64 lowercase hex characters"
        )));
    }
    if path.is_empty() || path.starts_with('/') || path.contains('\\') {
        return Err(bad(format!("path {path:?} must be relative with / separators")));
    }
    if path.split('/').any(|seg| seg == "..") {
        return Err(bad(format!("path {path:?} must not contain ..")));
    }
    Ok(())
}

pub fn parse_manifest(text: &str) -> Result<HashManifest, PipelineError> {
    let entries: BTreeMap<String, String> =
        serde_json::from_str(text).map_err(|e| PipelineError::MalformedManifest {
            reason: e.to_string(),
        })?;
    for (path, digest) in &entries {
        check_entry(path, digest)?;
    }
    Ok(HashManifest { entries })
}

pub fn load_manifest<P: AsRef<Path>>(path: P) -> Result<HashManifest, PipelineError> {
    parse_manifest(&std::fs::read_to_string(path)?)
}

/// Streamed sha256 of a file, as lowercase hex.
pub fn sha256_file<P: AsRef<Path>>(path: P) -> std::io::Result<String> {
    let mut file = std::fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex_lower(&hasher.finalize()))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex_lower(&Sha256::digest(bytes))
}

fn hex_lower(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FileStatus {
    Ok,
    Missing,
    Mismatch { actual: String },
}

#[derive(Debug, Clone)]
pub struct FileCheck {
    pub path: String,
    pub status: FileStatus,
}

/// Check every manifest entry against the files under `root`, in
/// manifest (sorted path) order.
pub fn validate_files(
    manifest: &HashManifest,
    root: &Path,
) -> Result<Vec<FileCheck>, PipelineError> {
    let mut checks = Vec::with_capacity(manifest.len());
    for (rel, expected) in manifest.entries() {
        let path = root.join(rel);
        let status = if !path.is_file() {
            FileStatus::Missing
        } else {
            let actual = sha256_file(&path)?;
            if actual == expected {
                FileStatus::Ok
            } else {
                FileStatus::Mismatch { actual }
            }
        };
        checks.push(FileCheck {
            path: rel.to_string(),
            status,
        });
    }
    Ok(checks)
}

/// Build a manifest covering every file under `root`, with '/'-separated
/// relative paths.
pub fn manifest_from_dir(root: &Path) -> Result<HashManifest, PipelineError> {
    let mut entries = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let mut children: Vec<_> = std::fs::read_dir(&dir)?
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .map(|e| e.path())
            .collect();
        children.sort();
        for child in children {
            if child.is_dir() {
                stack.push(child);
            } else if child.is_file() {
                let rel = child
                    .strip_prefix(root)
                    .expect("child is under root by construction")
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect::<Vec<_>>()
                    .join("/");
                entries.insert(rel, sha256_file(&child)?);
            }
        }
    }
    Ok(HashManifest { entries })
}
