//! Checksum-validated file fetching over http(s) and file URLs.

use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{manifest::sha256_file, PipelineError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FetchOutcome {
    /// The destination already had the expected digest; nothing touched.
    AlreadyPresent,
    Fetched,
}

/// Fetch `url` to `dest_path`. The transfer streams into a temporary
/// file in the destination directory and is renamed into place only
/// after the optional digest check passes, so a bad transfer never
/// leaves a partial or corrupt destination. An existing destination with
/// the expected digest short-circuits the download.
pub fn fetch(
    url: &str,
    dest_path: &Path,
    expected_digest: Option<&str>,
) -> Result<FetchOutcome, PipelineError> {
    if let Some(expected) = expected_digest {
        if dest_path.is_file() && sha256_file(dest_path)? == expected {
            return Ok(FetchOutcome::AlreadyPresent);
        }
    }

    if let Some(parent) = dest_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let dir = dest_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;

    let mut hasher = Sha256::new();
    let mut copy_stream = |reader: &mut dyn Read| -> Result<(), PipelineError> {
        let mut buf = [0u8; 64 * 1024];
        loop {
            let n = reader.read(&mut buf).map_err(PipelineError::Io)?;
            if n == 0 {
                return Ok(());
            }
            hasher.update(&buf[..n]);
            tmp.write_all(&buf[..n])?;
        }
    };

    if let Some(path) = url.strip_prefix("file://") {
        let mut src = std::fs::File::open(path)?;
        copy_stream(&mut src)?;
    } else if url.starts_with("http://") || url.starts_with("https://") {
        let response = ureq::get(url).call().map_err(|e| PipelineError::NetworkError {
            url: url.to_string(),
            reason: e.to_string(),
        })?;
        copy_stream(&mut response.into_reader())?;
    } else {
        return Err(PipelineError::BadUrl(url.to_string()));
    }

    let actual: String = hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    if let Some(expected) = expected_digest {
        if actual != expected {
            // tmp is removed on drop, dest stays absent/untouched
            return Err(PipelineError::DigestMismatch {
                name: url.to_string(),
                expected: expected.to_string(),
                actual,
            });
        }
    }
    tmp.persist(dest_path).map_err(|e| PipelineError::Io(e.error))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(dest_path, std::fs::Permissions::from_mode(0o644))?;
    }
    Ok(FetchOutcome::Fetched)
}
