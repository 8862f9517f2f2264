//! TOML experiment configuration: task, backend, sampling, verification,
//! weighting, and iteration settings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gaplab_core::{MatchMode, Mechanism, SamplingConfig, WeightFunction};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which task family a run draws prompts from. The family picks the matching
/// rule, default templates, and gold-answer interpretation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Numeric or short-string answers anchored by an answer phrase.
    Math,
    /// Free-form answers matched against a gold candidate set.
    Trivia,
    /// 4x4 sudoku grids checked by the exact oracle.
    Sudoku,
    /// Programmable synthetic model; gold is the designated correct answer.
    Synthetic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub kind: TaskKind,
    /// Dataset name recorded in the run manifest, e.g. "gsm8k".
    pub name: String,
    #[serde(default = "default_split")]
    pub split: String,
    /// JSONL prompt file; optional for generated datasets.
    #[serde(default)]
    pub data: Option<PathBuf>,
    /// JSONL few-shot exemplar file.
    #[serde(default)]
    pub few_shot_data: Option<PathBuf>,
    /// Expected exemplar count; defaults to 4 when a few-shot file is given.
    #[serde(default)]
    pub shots: Option<usize>,
    #[serde(default = "default_match_mode")]
    pub match_mode: MatchMode,
    #[serde(default = "default_answer_phrase")]
    pub answer_phrase: String,
    /// Directory overriding the embedded prompt templates file by file.
    #[serde(default)]
    pub template_dir: Option<PathBuf>,
    #[serde(default = "default_u_min")]
    pub u_min: f64,
    #[serde(default = "default_u_max")]
    pub u_max: f64,
}

fn default_split() -> String {
    String::from("test")
}

fn default_match_mode() -> MatchMode {
    MatchMode::Flexible
}

fn default_answer_phrase() -> String {
    String::from("The answer is")
}

fn default_u_min() -> f64 {
    0.0
}

fn default_u_max() -> f64 {
    1.0
}

/// `[sampling]` table with every field optional; unset fields take the
/// defaults from [`SamplingConfig::default`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingToml {
    #[serde(default)]
    pub top_p: Option<f64>,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub max_tokens: Option<u32>,
    #[serde(default)]
    pub n_generations: Option<u32>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl SamplingToml {
    pub fn resolved(&self) -> SamplingConfig {
        let d = SamplingConfig::default();
        SamplingConfig {
            top_p: self.top_p.unwrap_or(d.top_p),
            temperature: self.temperature.unwrap_or(d.temperature),
            max_tokens: self.max_tokens.unwrap_or(d.max_tokens),
            n_generations: self.n_generations.unwrap_or(d.n_generations),
            seed: self.seed.unwrap_or(d.seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// OpenAI-style completions endpoint over HTTP.
    Http,
    /// In-process programmable model.
    Synthetic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Model identifier recorded in manifests and sent to HTTP backends.
    pub model: String,
    /// Completions endpoint URL (http backends).
    #[serde(default)]
    pub url: Option<String>,
    /// Environment variable holding the bearer token (http backends).
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    /// Path to a synthetic model spec JSON file (synthetic backends).
    #[serde(default)]
    pub synthetic_spec: Option<PathBuf>,
    #[serde(default = "default_max_inflight")]
    pub max_inflight: usize,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_api_key_env() -> String {
    String::from("GAPLAB_API_KEY")
}

fn default_max_inflight() -> usize {
    crate::parallel::DEFAULT_MAX_INFLIGHT
}

fn default_max_retries() -> u32 {
    4
}

fn default_timeout_secs() -> u64 {
    120
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_mechanism")]
    pub mechanism: Mechanism,
    /// Verifier samples drawn per generation; scores are averaged at
    /// aggregation time. Tournaments ignore this and run one bracket.
    #[serde(default = "default_samples")]
    pub samples_per_generation: u32,
    /// Bracket depth r; the bracket holds 2^r entrants.
    #[serde(default = "default_tournament_rounds")]
    pub tournament_rounds: u32,
    /// Top-logprob count requested from HTTP backends for the MC probe.
    #[serde(default = "default_top_logprobs")]
    pub top_logprobs: u32,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            mechanism: default_mechanism(),
            samples_per_generation: default_samples(),
            tournament_rounds: default_tournament_rounds(),
            top_logprobs: default_top_logprobs(),
        }
    }
}

fn default_mechanism() -> Mechanism {
    Mechanism::CotBinary
}

fn default_samples() -> u32 {
    1
}

fn default_tournament_rounds() -> u32 {
    3
}

fn default_top_logprobs() -> u32 {
    20
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterateConfig {
    #[serde(default = "default_rounds")]
    pub rounds: u32,
    /// Early-stop threshold: iteration halts once the absolute gap drops
    /// below this floor.
    #[serde(default = "default_gap_floor")]
    pub gap_floor: f64,
    /// k values for per-round pass@k reporting.
    #[serde(default = "default_pass_k")]
    pub pass_k: Vec<u64>,
}

impl Default for IterateConfig {
    fn default() -> Self {
        IterateConfig {
            rounds: default_rounds(),
            gap_floor: default_gap_floor(),
            pass_k: default_pass_k(),
        }
    }
}

fn default_rounds() -> u32 {
    4
}

fn default_gap_floor() -> f64 {
    0.005
}

fn default_pass_k() -> Vec<u64> {
    vec![1, 128]
}

/// Per-mechanism weight functions used by reports that span mechanisms
/// (correlation, ensemble). Missing entries fall back to
/// [`canonical_weight`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    #[serde(default)]
    pub weights: BTreeMap<Mechanism, WeightFunction>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub task: TaskConfig,
    pub backend: BackendConfig,
    #[serde(default)]
    pub sampling: SamplingToml,
    #[serde(default)]
    pub verify: VerifyConfig,
    /// Default weight function for gap reports and exports.
    #[serde(default)]
    pub weight: Option<WeightFunction>,
    #[serde(default)]
    pub iterate: IterateConfig,
    #[serde(default)]
    pub report: ReportConfig,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("read {}: {e}", path.display())))?;
        let cfg: Config = toml::from_str(&text)
            .map_err(|e| Error::config(format!("parse {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.sampling.resolved().validate()?;
        if let Some(w) = &self.weight {
            w.validate()?;
        }
        for w in self.report.weights.values() {
            w.validate()?;
        }
        if self.backend.kind == BackendKind::Http && self.backend.url.is_none() {
            return Err(Error::config("http backend requires backend.url"));
        }
        if self.backend.kind == BackendKind::Synthetic && self.backend.synthetic_spec.is_none() {
            return Err(Error::config(
                "synthetic backend requires backend.synthetic_spec",
            ));
        }
        if self.verify.samples_per_generation == 0 {
            return Err(Error::config("verify.samples_per_generation must be >= 1"));
        }
        if self.verify.tournament_rounds == 0 || self.verify.tournament_rounds > 20 {
            return Err(Error::config("verify.tournament_rounds must be in 1..=20"));
        }
        if !(self.iterate.gap_floor.is_finite() && self.iterate.gap_floor >= 0.0) {
            return Err(Error::config("iterate.gap_floor must be finite and >= 0"));
        }
        if self.iterate.pass_k.contains(&0) {
            return Err(Error::config("iterate.pass_k entries must be >= 1"));
        }
        Ok(())
    }

    /// Weight function for `mechanism`, from the report table, the run-wide
    /// default, or the mechanism's canonical threshold, in that order.
    pub fn weight_for(&self, mechanism: Mechanism) -> WeightFunction {
        self.report
            .weights
            .get(&mechanism)
            .copied()
            .or(self.weight)
            .unwrap_or_else(|| canonical_weight(mechanism))
    }
}

/// Default keep-if-verified thresholds per mechanism: the midpoint for MC,
/// the accept side for binary judgments, 8 of 10 for scores, and at least
/// one round survived for tournaments.
pub fn canonical_weight(mechanism: Mechanism) -> WeightFunction {
    match mechanism {
        Mechanism::Mc => WeightFunction::IndicatorGlobal { tau: 0.5 },
        Mechanism::CotBinary => WeightFunction::IndicatorGlobal { tau: 0.5 },
        Mechanism::CotScore => WeightFunction::IndicatorGlobal { tau: 8.0 },
        Mechanism::Tournament => WeightFunction::IndicatorGlobal { tau: 1.0 },
    }
}

/// Parses the CLI weight syntax: `constant`, `tau=0.75`, `top=0.7`,
/// `exp=0.5`.
pub fn parse_weight_arg(arg: &str) -> Result<WeightFunction> {
    let arg = arg.trim();
    if arg == "constant" {
        return Ok(WeightFunction::Constant);
    }
    let (kind, value) = arg
        .split_once('=')
        .ok_or_else(|| Error::config(format!("weight `{arg}`: expected kind=value or `constant`")))?;
    let value: f64 = value
        .trim()
        .parse()
        .map_err(|e| Error::config(format!("weight `{arg}`: bad value: {e}")))?;
    let w = match kind.trim() {
        "tau" => WeightFunction::IndicatorGlobal { tau: value },
        "top" => WeightFunction::IndicatorQuantile { n: value },
        "exp" => WeightFunction::Exponential { beta: value },
        other => {
            return Err(Error::config(format!(
                "weight `{arg}`: unknown kind `{other}` (expected tau, top, exp, or constant)"
            )))
        }
    };
    w.validate()?;
    Ok(w)
}
