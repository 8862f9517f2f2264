//! Append-only request journal keyed by content hash.
//!
//! Every HTTP request body is hashed; the journal stores the response under
//! that hash so an interrupted run replays finished calls from disk instead
//! of re-spending tokens. Replaying a line whose key repeats keeps the last
//! write.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize, Deserialize)]
struct JournalLine {
    key: String,
    request: serde_json::Value,
    response: serde_json::Value,
}

/// On-disk journal plus an in-memory index of completed requests.
pub struct Journal {
    path: PathBuf,
    entries: HashMap<String, serde_json::Value>,
}

impl Journal {
    /// Opens (or creates) the journal at `path` and loads its index.
    /// Truncated trailing lines from a crashed writer are skipped.
    pub fn open(path: &Path) -> std::io::Result<Journal> {
        let mut entries = HashMap::new();
        match File::open(path) {
            Ok(f) => {
                for line in BufReader::new(f).lines() {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    if let Ok(parsed) = serde_json::from_str::<JournalLine>(&line) {
                        entries.insert(parsed.key, parsed.response);
                    }
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e),
        }
        Ok(Journal {
            path: path.to_path_buf(),
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, key: &str) -> Option<&serde_json::Value> {
        self.entries.get(key)
    }

    /// Appends one completed request/response pair and indexes it.
    pub fn record(
        &mut self,
        key: String,
        request: &serde_json::Value,
        response: serde_json::Value,
    ) -> std::io::Result<()> {
        let line = JournalLine {
            key: key.clone(),
            request: request.clone(),
            response: response.clone(),
        };
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path)?;
        serde_json::to_writer(&mut f, &line)?;
        f.write_all(b"\n")?;
        f.flush()?;
        self.entries.insert(key, response);
        Ok(())
    }
}

/// Content hash of a request body. `serde_json::Value` keeps object keys
/// sorted, so equal requests hash equally regardless of construction order.
pub fn request_key(body: &serde_json::Value) -> String {
    let canonical = serde_json::to_string(body).expect("request body serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    let mut out = String::with_capacity(64);
    for byte in digest {
        use std::fmt::Write as _;
        let _ = write!(out, "{byte:02x}");
    }
    out
}
