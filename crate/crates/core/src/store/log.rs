//! Line-delimited JSON append-only log.
//!
//! Each line is `{"seq":N,"event":{..}}` terminated by `\n`. Sequence numbers
//! start at 1 and increase by one. A line that fails to parse, breaks the
//! sequence, or lacks its terminating newline marks the log corrupt.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log {path} is corrupt after seq {last_valid_seq}: {reason}")]
    Corrupt { path: PathBuf, last_valid_seq: u64, reason: String },
    #[error("log {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

#[derive(Serialize)]
struct EnvelopeRef<'a, T> {
    seq: u64,
    event: &'a T,
}

#[derive(Deserialize)]
struct Envelope<T> {
    seq: u64,
    event: T,
}

pub struct LogWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl LogWriter {
    /// Opens `path` for appending, creating it if missing.
    pub fn open(path: impl Into<PathBuf>) -> io::Result<Self> {
        let path = path.into();
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(LogWriter { path, out: BufWriter::new(file) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Buffers one record; call [`LogWriter::flush`] to make it visible.
    pub fn append<T: Serialize>(&mut self, seq: u64, event: &T) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, &EnvelopeRef { seq, event })?;
        self.out.write_all(b"\n")
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }
}

/// Feeds every record of the log at `path` to `apply` in order and returns
/// the last sequence number (0 for a missing or empty log).
pub fn replay<T, F>(path: &Path, mut apply: F) -> Result<u64, LogError>
where
    T: DeserializeOwned,
    F: FnMut(u64, T) -> Result<(), String>,
{
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(0),
        Err(source) => return Err(LogError::Io { path: path.to_owned(), source }),
    };
    let mut reader = BufReader::new(file);
    let mut last = 0u64;
    let mut line = Vec::new();
    loop {
        line.clear();
        let n = reader
            .read_until(b'\n', &mut line)
            .map_err(|source| LogError::Io { path: path.to_owned(), source })?;
        if n == 0 {
            return Ok(last);
        }
        let corrupt = |reason: String| LogError::Corrupt { path: path.to_owned(), last_valid_seq: last, reason };
        if line.last() != Some(&b'\n') {
            return Err(corrupt("truncated record".into()));
        }
        let record: Envelope<T> =
            serde_json::from_slice(&line[..line.len() - 1]).map_err(|e| corrupt(format!("bad record: {e}")))?;
        if record.seq != last + 1 {
            return Err(corrupt(format!("expected seq {}, found {}", last + 1, record.seq)));
        }
        apply(record.seq, record.event).map_err(corrupt)?;
        last = record.seq;
    }
}
