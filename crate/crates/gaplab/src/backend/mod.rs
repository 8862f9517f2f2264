//! Model backends: an OpenAI-style HTTP completions client and the
//! in-process programmable model, unified behind [`ModelHandle`].

pub mod http;
pub mod journal;
pub mod synthetic;

use gaplab_core::types::{Generation, Mechanism, PromptInstance, SamplingConfig, TaskSpec, VerificationRecord};
use gaplab_core::verify::PairWinner;

pub use http::{HttpBackend, HttpModel};
pub use journal::Journal;
pub use synthetic::SyntheticModel;

use crate::config::VerifyConfig;
use crate::error::Result;

/// Backend call failures, grouped so callers can tell permanent problems
/// (auth, malformed payloads, missing capabilities) from transient ones.
#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("authentication rejected with status {status}")]
    Auth { status: u16 },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("transport failure after {attempts} attempt(s): {detail}")]
    Transport { attempts: u32, detail: String },
    #[error("http status {status} after {attempts} attempt(s): {body}")]
    Status {
        status: u16,
        attempts: u32,
        body: String,
    },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("backend lacks a required capability: {0}")]
    Capability(String),
    #[error("journal: {0}")]
    Journal(#[from] std::io::Error),
}

/// One request for `n` sampled completions of a rendered prompt.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub n: u32,
    pub max_tokens: u32,
    pub temperature: f64,
    pub top_p: f64,
    pub seed: u64,
    /// Top-logprob count for the first sampled token; `None` skips logprobs.
    pub top_logprobs: Option<u32>,
    pub stop: Vec<String>,
}

/// One sampled completion. `first_token_top_logprobs` is present only when
/// the request asked for logprobs and the backend supplied them.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub first_token_top_logprobs: Option<Vec<(String, f64)>>,
}

/// FNV-1a over length-delimited parts; derives stable per-request and
/// per-bracket seeds from a base seed plus context strings.
pub(crate) fn mix_seed(seed: u64, parts: &[&str]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            hash ^= u64::from(b);
            hash = hash.wrapping_mul(PRIME);
        }
    };
    eat(&seed.to_le_bytes());
    for part in parts {
        eat(&(part.len() as u64).to_le_bytes());
        eat(part.as_bytes());
    }
    hash
}

/// A generation or verification model: either a remote HTTP endpoint or the
/// in-process programmable model. All pipeline code goes through this enum
/// so the two stay interchangeable.
pub enum ModelHandle {
    Http(Box<HttpModel>),
    Synthetic(SyntheticModel),
}

impl ModelHandle {
    /// Identifier recorded in run manifests.
    pub fn model_id(&self) -> &str {
        match self {
            ModelHandle::Http(m) => &m.model_id,
            ModelHandle::Synthetic(m) => &m.model_id,
        }
    }

    /// Samples `sampling.n_generations` responses for one prompt and scores
    /// them against the gold answer.
    pub fn generate(
        &self,
        task: &TaskSpec,
        prompt: &PromptInstance,
        sampling: &SamplingConfig,
    ) -> Result<Vec<Generation>> {
        match self {
            ModelHandle::Http(m) => m.generate(task, prompt, sampling),
            ModelHandle::Synthetic(m) => m.generate(prompt, sampling),
        }
    }

    /// Scores one generation with one pointwise mechanism (`sample_idx`
    /// decorrelates repeated draws). Tournaments go through [`Self::compare`].
    pub fn verify(
        &self,
        task: &TaskSpec,
        prompt: &PromptInstance,
        generation: &Generation,
        mechanism: Mechanism,
        verify_cfg: &VerifyConfig,
        sample_idx: u32,
    ) -> Result<VerificationRecord> {
        match self {
            ModelHandle::Http(m) => {
                m.verify(task, prompt, generation, mechanism, verify_cfg, sample_idx)
            }
            ModelHandle::Synthetic(m) => m.verify(generation, mechanism, sample_idx),
        }
    }

    /// Judges one bracket pairing; returns the winner, the raw judgment text,
    /// and whether the verdict parsed cleanly.
    pub fn compare(
        &self,
        task: &TaskSpec,
        prompt: &PromptInstance,
        a: &Generation,
        b: &Generation,
        nonce: u64,
    ) -> Result<(PairWinner, String, bool)> {
        match self {
            ModelHandle::Http(m) => m.compare(task, prompt, a, b, nonce),
            ModelHandle::Synthetic(m) => m.compare(prompt, a, b, nonce),
        }
    }
}
