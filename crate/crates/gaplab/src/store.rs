//! Run directory persistence: versioned JSONL record files, the run
//! manifest, tournament summaries, reports, and exports.
//!
//! A run directory is append-only and owned by one process at a time (a
//! lock file enforces the single writer). Record files carry a schema
//! version on every line so future readers can detect incompatible layouts.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use gaplab_core::types::{
    Generation, MatchMode, Mechanism, SamplingConfig, VerificationRecord, WeightFunction,
};
use gaplab_core::verify::TournamentResult;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::TaskKind;
use crate::error::{Error, Result};

/// Version stamped on every persisted record and manifest.
pub const SCHEMA_VERSION: u32 = 1;

/// Wraps each JSONL record with the schema version.
#[derive(Debug, Serialize, Deserialize)]
struct Envelope<T> {
    v: u32,
    #[serde(flatten)]
    record: T,
}

/// Identity of one run directory: which task, model, and sampling setup
/// produced its records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub v: u32,
    pub run_id: String,
    pub task_name: String,
    pub split: String,
    pub task_kind: TaskKind,
    pub generator_model: String,
    pub verifier_model: String,
    pub sampling: SamplingConfig,
    pub mechanism: Mechanism,
    pub weight: Option<WeightFunction>,
    pub match_mode: MatchMode,
    pub seed: u64,
    pub created_at: String,
    /// Run this one was derived from (iteration rounds, cross-verification).
    pub parent_run: Option<String>,
}

/// One bracket outcome, persisted per prompt in `tournament.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBracket {
    /// Survivor sets per round; index 0 is the seeded entrant set.
    pub rounds: Vec<Vec<u32>>,
    pub winner: u32,
    pub first_position_wins: usize,
    pub total_comparisons: usize,
    pub flagged_comparisons: usize,
}

impl From<&TournamentResult> for PromptBracket {
    fn from(r: &TournamentResult) -> Self {
        PromptBracket {
            rounds: r.rounds.clone(),
            winner: r.winner,
            first_position_wins: r.first_position_wins,
            total_comparisons: r.total_comparisons,
            flagged_comparisons: r.flagged_comparisons,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TournamentSummary {
    pub v: u32,
    /// Bracket depth r (2^r entrants).
    pub bracket_rounds: u32,
    pub per_prompt: BTreeMap<String, PromptBracket>,
}

/// One exported training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportRecord {
    pub prompt: String,
    pub completion: String,
    /// Importance weight; present only for non-indicator weight functions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

/// Guard file marking the directory's single writer; removed on drop.
#[derive(Debug)]
struct LockGuard {
    path: PathBuf,
}

impl LockGuard {
    fn acquire(dir: &Path) -> Result<LockGuard> {
        let path = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(LockGuard { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::data(format!(
                "run directory is locked by another process (remove {} if stale)",
                path.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

/// Handle on one run directory. Writers hold the lock; read-only handles
/// (see [`RunStore::open_read`]) never write by convention.
#[derive(Debug)]
pub struct RunStore {
    dir: PathBuf,
    _lock: Option<LockGuard>,
}

impl RunStore {
    /// Opens `dir` for reading and writing, creating it if needed.
    pub fn open(dir: &Path) -> Result<RunStore> {
        std::fs::create_dir_all(dir)?;
        let lock = LockGuard::acquire(dir)?;
        Ok(RunStore {
            dir: dir.to_path_buf(),
            _lock: Some(lock),
        })
    }

    /// Opens an existing run for reading without taking the writer lock;
    /// concurrent readers are always allowed.
    pub fn open_read(dir: &Path) -> Result<RunStore> {
        if !dir.is_dir() {
            return Err(Error::data(format!(
                "run directory {} does not exist",
                dir.display()
            )));
        }
        Ok(RunStore {
            dir: dir.to_path_buf(),
            _lock: None,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.dir.join("manifest.json")
    }

    pub fn generations_path(&self) -> PathBuf {
        self.dir.join("generations.jsonl")
    }

    pub fn verifications_path(&self, mechanism: Mechanism) -> PathBuf {
        self.dir.join(format!("verifications.{}.jsonl", mechanism.as_str()))
    }

    pub fn tournament_path(&self) -> PathBuf {
        self.dir.join("tournament.json")
    }

    /// One report file per (mechanism, weight) pair; the weight slug alone
    /// would collide across mechanisms.
    pub fn report_path(&self, mechanism: Mechanism, weight: &WeightFunction) -> PathBuf {
        self.dir
            .join(format!("report.{}.{}.json", mechanism.as_str(), weight.slug()))
    }

    pub fn export_path(&self) -> PathBuf {
        self.dir.join("export.jsonl")
    }

    pub fn journal_path(&self) -> PathBuf {
        self.dir.join("requests.jsonl")
    }

    pub fn has_manifest(&self) -> bool {
        self.manifest_path().is_file()
    }

    pub fn write_manifest(&self, manifest: &RunManifest) -> Result<()> {
        write_json_pretty(&self.manifest_path(), manifest)
    }

    pub fn read_manifest(&self) -> Result<RunManifest> {
        let manifest: RunManifest = read_json(&self.manifest_path())?;
        if manifest.v > SCHEMA_VERSION {
            return Err(Error::data(format!(
                "manifest schema v{} is newer than supported v{SCHEMA_VERSION}",
                manifest.v
            )));
        }
        Ok(manifest)
    }

    pub fn append_generations(&self, records: &[Generation]) -> Result<()> {
        append_jsonl(&self.generations_path(), records)
    }

    pub fn load_generations(&self) -> Result<Vec<Generation>> {
        read_jsonl(&self.generations_path())
    }

    /// Generations grouped by prompt, ordered by generation index.
    pub fn generations_by_prompt(&self) -> Result<BTreeMap<String, Vec<Generation>>> {
        let mut by_prompt: BTreeMap<String, Vec<Generation>> = BTreeMap::new();
        for g in self.load_generations()? {
            by_prompt.entry(g.prompt_id.clone()).or_default().push(g);
        }
        for gens in by_prompt.values_mut() {
            gens.sort_by_key(|g| g.gen_index);
        }
        Ok(by_prompt)
    }

    /// Persisted generation indices per prompt, for resume-time skipping.
    pub fn generation_keys(&self) -> Result<BTreeMap<String, BTreeSet<u32>>> {
        let mut keys: BTreeMap<String, BTreeSet<u32>> = BTreeMap::new();
        for g in self.load_generations()? {
            keys.entry(g.prompt_id).or_default().insert(g.gen_index);
        }
        Ok(keys)
    }

    pub fn append_verifications(
        &self,
        mechanism: Mechanism,
        records: &[VerificationRecord],
    ) -> Result<()> {
        append_jsonl(&self.verifications_path(mechanism), records)
    }

    pub fn load_verifications(&self, mechanism: Mechanism) -> Result<Vec<VerificationRecord>> {
        read_jsonl(&self.verifications_path(mechanism))
    }

    /// Persisted verifier samples per (prompt, generation) key.
    pub fn verification_counts(
        &self,
        mechanism: Mechanism,
    ) -> Result<BTreeMap<(String, u32), u32>> {
        let mut counts: BTreeMap<(String, u32), u32> = BTreeMap::new();
        for r in self.load_verifications(mechanism)? {
            *counts.entry((r.prompt_id, r.gen_index)).or_insert(0) += 1;
        }
        Ok(counts)
    }

    pub fn write_tournament_summary(&self, summary: &TournamentSummary) -> Result<()> {
        write_json_pretty(&self.tournament_path(), summary)
    }

    pub fn read_tournament_summary(&self) -> Result<TournamentSummary> {
        let summary: TournamentSummary = read_json(&self.tournament_path())?;
        if summary.v > SCHEMA_VERSION {
            return Err(Error::data(format!(
                "tournament schema v{} is newer than supported v{SCHEMA_VERSION}",
                summary.v
            )));
        }
        Ok(summary)
    }

    pub fn write_report<T: Serialize>(
        &self,
        mechanism: Mechanism,
        weight: &WeightFunction,
        report: &T,
    ) -> Result<PathBuf> {
        let path = self.report_path(mechanism, weight);
        write_json_pretty(&path, report)?;
        Ok(path)
    }

    pub fn write_export(&self, records: &[ExportRecord]) -> Result<()> {
        let path = self.export_path();
        let file = File::create(&path)?;
        let mut out = BufWriter::new(file);
        for record in records {
            let envelope = Envelope {
                v: SCHEMA_VERSION,
                record,
            };
            serde_json::to_writer(&mut out, &envelope)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load_export(&self) -> Result<Vec<ExportRecord>> {
        read_jsonl(&self.export_path())
    }
}

fn append_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    if records.is_empty() {
        return Ok(());
    }
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut out = BufWriter::new(file);
    for record in records {
        let envelope = Envelope {
            v: SCHEMA_VERSION,
            record,
        };
        serde_json::to_writer(&mut out, &envelope)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a JSONL record file; a missing file is an empty record set.
fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let envelope: Envelope<T> = serde_json::from_str(&line).map_err(|e| {
            Error::data(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        if envelope.v > SCHEMA_VERSION {
            return Err(Error::data(format!(
                "{}:{}: record schema v{} is newer than supported v{SCHEMA_VERSION}",
                path.display(),
                lineno + 1,
                envelope.v
            )));
        }
        out.push(envelope.record);
    }
    Ok(out)
}

pub(crate) fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::data(format!("read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::data(format!("{}: {e}", path.display())))
}
