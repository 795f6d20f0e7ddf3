//! Line-delimited JSON helpers shared by every on-disk store.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {source}")]
    Malformed {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

impl JsonlError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        JsonlError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Reads every non-blank line of `path` as one `T`, returning each record
/// with its 1-based line number.
pub fn read<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>, JsonlError> {
    let file = File::open(path).map_err(|e| JsonlError::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| JsonlError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|source| JsonlError::Malformed {
            path: path.to_path_buf(),
            line: idx + 1,
            source,
        })?;
        out.push((idx + 1, record));
    }
    Ok(out)
}

/// Serializes records one per line. Output goes to a sibling temp file that
/// is renamed into place, so readers never observe a half-written store.
pub fn write<'a, T, I>(path: &Path, records: I) -> Result<(), JsonlError>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let tmp = tmp_path(path);
    {
        let file = File::create(&tmp).map_err(|e| JsonlError::io(path, e))?;
        let mut w = BufWriter::new(file);
        for record in records {
            serde_json::to_writer(&mut w, record)
                .map_err(|e| JsonlError::io(path, std::io::Error::other(e)))?;
            w.write_all(b"\n").map_err(|e| JsonlError::io(path, e))?;
        }
        w.flush().map_err(|e| JsonlError::io(path, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| JsonlError::io(path, e))
}

/// Appends a single record and syncs it to disk.
pub fn append<T: Serialize>(path: &Path, record: &T) -> Result<(), JsonlError> {
    let mut line = serde_json::to_vec(record)
        .map_err(|e| JsonlError::io(path, std::io::Error::other(e)))?;
    line.push(b'\n');
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| JsonlError::io(path, e))?;
    file.write_all(&line).map_err(|e| JsonlError::io(path, e))?;
    file.sync_data().map_err(|e| JsonlError::io(path, e))
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}
