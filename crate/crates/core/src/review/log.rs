use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{Event, ReviewError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub seq: u64,
    /// Milliseconds since the Unix epoch; not used by replay.
    pub ts_ms: u64,
    pub event: Event,
}

/// Append-only JSONL event file.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
    next_seq: u64,
}

impl EventLog {
    /// Open or create the log and return it with every stored event.
    ///
    /// A trailing line without a newline is an unacknowledged partial write
    /// and is truncated away.
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, Vec<Event>), ReviewError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| ReviewError::Io { path: path.clone(), source };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(&path).map_err(io)?;
        let mut events = Vec::new();
        let mut good_len = 0u64;
        {
            let mut reader = BufReader::new(&file);
            let mut line = String::new();
            loop {
                line.clear();
                let n = reader.read_line(&mut line).map_err(io)?;
                if n == 0 || !line.ends_with('\n') {
                    break;
                }
                let parsed: LogLine = serde_json::from_str(line.trim_end()).map_err(|e| ReviewError::CorruptLog {
                    path: path.clone(),
                    reason: format!("line {}: {e}", events.len() + 1),
                })?;
                if parsed.seq != events.len() as u64 {
                    return Err(ReviewError::CorruptLog {
                        path: path.clone(),
                        reason: format!("sequence {} at line {}", parsed.seq, events.len() + 1),
                    });
                }
                events.push(parsed.event);
                good_len += n as u64;
            }
        }
        if file.metadata().map_err(io)?.len() != good_len {
            file.set_len(good_len).map_err(io)?;
            file.sync_data().map_err(io)?;
        }
        file.seek(SeekFrom::End(0)).map_err(io)?;
        let next_seq = events.len() as u64;
        Ok((Self { path, file, next_seq }, events))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> u64 {
        self.next_seq
    }

    pub fn is_empty(&self) -> bool {
        self.next_seq == 0
    }

    /// Write one event and sync it to disk; returns its sequence number.
    pub fn append(&mut self, event: &Event) -> Result<u64, ReviewError> {
        let ts_ms = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64);
        let line = LogLine { seq: self.next_seq, ts_ms, event: event.clone() };
        let mut text = serde_json::to_string(&line).expect("events serialize");
        text.push('\n');
        let io = |source| ReviewError::Io { path: self.path.clone(), source };
        self.file.write_all(text.as_bytes()).map_err(io)?;
        self.file.sync_data().map_err(io)?;
        self.next_seq += 1;
        Ok(line.seq)
    }
}
