//! Blocking OpenAI-style completions client with retries and a request
//! journal, plus the task-aware model wrapper built on it.

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Duration;

use gaplab_core::tasks::{
    render_generation_prompt, render_tournament_prompt, render_verification_prompt,
    score_generation,
};
use gaplab_core::types::{
    Generation, Mechanism, PromptInstance, SamplingConfig, TaskSpec, VerificationRecord,
};
use gaplab_core::verify::{
    mc_utility, parse_cot_binary, parse_cot_score, parse_tournament, sum_token_probs,
    McTokenConfig, PairWinner,
};
use serde::Deserialize;
use serde_json::json;

use super::journal::{request_key, Journal};
use super::{mix_seed, BackendError, Completion, CompletionRequest};
use crate::config::{BackendConfig, VerifyConfig};
use crate::error::{Error, Result};

const BACKOFF_CAP_MS: u64 = 8_000;

/// Low-level completions client: one endpoint, one model id, bounded
/// retries with exponential backoff, and an optional on-disk journal that
/// replays finished calls on resume.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    api_key: Option<String>,
    max_retries: u32,
    backoff_ms: u64,
    journal: Option<Mutex<Journal>>,
}

impl HttpBackend {
    pub fn new(cfg: &BackendConfig, journal: Option<Journal>) -> Result<HttpBackend> {
        let url = cfg
            .url
            .clone()
            .ok_or_else(|| Error::config("http backend requires backend.url"))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| Error::Backend(BackendError::Transport {
                attempts: 0,
                detail: format!("client construction: {e}"),
            }))?;
        Ok(HttpBackend {
            client,
            url,
            model: cfg.model.clone(),
            api_key: std::env::var(&cfg.api_key_env).ok(),
            max_retries: cfg.max_retries,
            backoff_ms: 500,
            journal: journal.map(Mutex::new),
        })
    }

    /// Shrinks the retry backoff; used by tests so retry paths stay fast.
    pub fn with_backoff_ms(mut self, ms: u64) -> HttpBackend {
        self.backoff_ms = ms;
        self
    }

    /// Requests `req.n` completions, replaying from the journal when the
    /// identical request already completed.
    pub fn complete(&self, req: &CompletionRequest) -> std::result::Result<Vec<Completion>, BackendError> {
        let mut body = json!({
            "model": self.model,
            "prompt": req.prompt,
            "n": req.n,
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
            "top_p": req.top_p,
            "seed": req.seed,
        });
        if let Some(k) = req.top_logprobs {
            body["logprobs"] = json!(k);
        }
        if !req.stop.is_empty() {
            body["stop"] = json!(req.stop);
        }
        let key = request_key(&body);
        if let Some(journal) = &self.journal {
            let cached = journal
                .lock()
                .expect("journal lock poisoned")
                .lookup(&key)
                .cloned();
            if let Some(response) = cached {
                return parse_completions(&response);
            }
        }
        let response = self.send_with_retries(&body)?;
        let completions = parse_completions(&response)?;
        if let Some(journal) = &self.journal {
            journal
                .lock()
                .expect("journal lock poisoned")
                .record(key, &body, response)?;
        }
        Ok(completions)
    }

    fn send_with_retries(
        &self,
        body: &serde_json::Value,
    ) -> std::result::Result<serde_json::Value, BackendError> {
        let mut attempts = 0u32;
        loop {
            attempts += 1;
            let mut request = self.client.post(&self.url).json(body);
            if let Some(key) = &self.api_key {
                request = request.bearer_auth(key);
            }
            let failure = match request.send() {
                Ok(response) => {
                    let status = response.status();
                    if status.is_success() {
                        let text = response.text().map_err(|e| BackendError::Transport {
                            attempts,
                            detail: format!("reading body: {e}"),
                        })?;
                        return serde_json::from_str(&text)
                            .map_err(|e| BackendError::Malformed(format!("{e}")));
                    }
                    let code = status.as_u16();
                    if code == 401 || code == 403 {
                        return Err(BackendError::Auth { status: code });
                    }
                    let retryable = code == 429 || (500..=599).contains(&code);
                    let body_text = response.text().unwrap_or_default();
                    if !retryable {
                        return Err(BackendError::Status {
                            status: code,
                            attempts,
                            body: truncate(&body_text, 200),
                        });
                    }
                    BackendError::Status {
                        status: code,
                        attempts,
                        body: truncate(&body_text, 200),
                    }
                }
                Err(e) if e.is_timeout() => BackendError::Timeout { attempts },
                Err(e) => BackendError::Transport {
                    attempts,
                    detail: format!("{e}"),
                },
            };
            if attempts > self.max_retries {
                return Err(failure);
            }
            let exp = attempts.saturating_sub(1).min(16);
            let delay = (self.backoff_ms << exp).min(BACKOFF_CAP_MS);
            std::thread::sleep(Duration::from_millis(delay));
        }
    }
}

fn truncate(s: &str, limit: usize) -> String {
    if s.len() <= limit {
        s.to_string()
    } else {
        let mut end = limit;
        while !s.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}...", &s[..end])
    }
}

#[derive(Deserialize)]
struct ApiResponse {
    choices: Vec<ApiChoice>,
}

#[derive(Deserialize)]
struct ApiChoice {
    #[serde(default)]
    index: Option<u32>,
    text: String,
    #[serde(default)]
    logprobs: Option<ApiLogprobs>,
}

#[derive(Deserialize)]
struct ApiLogprobs {
    #[serde(default)]
    top_logprobs: Option<Vec<BTreeMap<String, f64>>>,
}

fn parse_completions(
    response: &serde_json::Value,
) -> std::result::Result<Vec<Completion>, BackendError> {
    let parsed: ApiResponse = serde_json::from_value(response.clone())
        .map_err(|e| BackendError::Malformed(format!("completions payload: {e}")))?;
    if parsed.choices.is_empty() {
        return Err(BackendError::Malformed(String::from("empty choices array")));
    }
    let mut indexed: Vec<(u32, ApiChoice)> = parsed
        .choices
        .into_iter()
        .enumerate()
        .map(|(pos, choice)| (choice.index.unwrap_or(pos as u32), choice))
        .collect();
    indexed.sort_by_key(|&(index, _)| index);
    Ok(indexed
        .into_iter()
        .map(|(_, choice)| Completion {
            text: choice.text,
            first_token_top_logprobs: choice.logprobs.and_then(|lp| {
                lp.top_logprobs
                    .and_then(|positions| positions.into_iter().next())
                    .map(|map| map.into_iter().collect())
            }),
        })
        .collect())
}

/// Task-aware model on top of [`HttpBackend`]: renders prompts, requests
/// completions, and parses scores with the shared parsers.
pub struct HttpModel {
    pub backend: HttpBackend,
    pub model_id: String,
    /// Sampling settings for verifier calls (generation calls receive theirs
    /// from the pipeline).
    pub verify_sampling: SamplingConfig,
    pub mc_tokens: McTokenConfig,
}

impl HttpModel {
    pub fn new(backend: HttpBackend, model_id: String, verify_sampling: SamplingConfig) -> HttpModel {
        HttpModel {
            backend,
            model_id,
            verify_sampling,
            mc_tokens: McTokenConfig::default(),
        }
    }

    pub fn generate(
        &self,
        task: &TaskSpec,
        prompt: &PromptInstance,
        sampling: &SamplingConfig,
    ) -> Result<Vec<Generation>> {
        let rendered = render_generation_prompt(task, &prompt.question);
        let req = CompletionRequest {
            prompt: rendered,
            n: sampling.n_generations,
            max_tokens: sampling.max_tokens,
            temperature: sampling.temperature,
            top_p: sampling.top_p,
            seed: mix_seed(sampling.seed, &["gen", &prompt.prompt_id]),
            top_logprobs: None,
            // Few-shot blocks are blank-line separated; stop before the model
            // invents the next one.
            stop: vec![String::from("\n\n")],
        };
        let completions = self.backend.complete(&req)?;
        if completions.len() != sampling.n_generations as usize {
            return Err(Error::Backend(BackendError::Malformed(format!(
                "requested {} completions, got {}",
                sampling.n_generations,
                completions.len()
            ))));
        }
        completions
            .into_iter()
            .enumerate()
            .map(|(i, completion)| {
                let scored = score_generation(task, prompt, &completion.text)?;
                Ok(Generation {
                    prompt_id: prompt.prompt_id.clone(),
                    gen_index: i as u32,
                    text: completion.text,
                    parsed_answer: scored.parsed_answer,
                    utility: scored.utility,
                    sampling: *sampling,
                })
            })
            .collect()
    }

    pub fn verify(
        &self,
        task: &TaskSpec,
        prompt: &PromptInstance,
        generation: &Generation,
        mechanism: Mechanism,
        verify_cfg: &VerifyConfig,
        sample_idx: u32,
    ) -> Result<VerificationRecord> {
        if mechanism == Mechanism::Tournament {
            return Err(Error::data(
                "tournament verification is pairwise; use the bracket runner",
            ));
        }
        let rendered =
            render_verification_prompt(task, mechanism, &prompt.question, &generation.text)?;
        let seed = mix_seed(
            self.verify_sampling.seed,
            &[
                mechanism.as_str(),
                &prompt.prompt_id,
                &generation.gen_index.to_string(),
                &sample_idx.to_string(),
            ],
        );
        let (raw_text, proxy_utility, parse_ok) = match mechanism {
            Mechanism::Mc => {
                let req = CompletionRequest {
                    prompt: rendered,
                    n: 1,
                    max_tokens: 1,
                    temperature: 0.0,
                    top_p: 1.0,
                    seed,
                    top_logprobs: Some(verify_cfg.top_logprobs),
                    stop: Vec::new(),
                };
                let completions = self.backend.complete(&req)?;
                let completion = &completions[0];
                let logprobs = completion.first_token_top_logprobs.as_ref().ok_or_else(|| {
                    Error::Backend(BackendError::Capability(String::from(
                        "MC verification needs first-token top logprobs",
                    )))
                })?;
                let p_pos = sum_token_probs(logprobs, &self.mc_tokens.positive_variants);
                let p_neg = sum_token_probs(logprobs, &self.mc_tokens.negative_variants);
                let (score, ok) = mc_utility(p_pos, p_neg)?;
                (completion.text.clone(), score, ok)
            }
            Mechanism::CotBinary | Mechanism::CotScore => {
                let req = CompletionRequest {
                    prompt: rendered,
                    n: 1,
                    max_tokens: self.verify_sampling.max_tokens,
                    temperature: self.verify_sampling.temperature,
                    top_p: self.verify_sampling.top_p,
                    seed,
                    top_logprobs: None,
                    stop: Vec::new(),
                };
                let completions = self.backend.complete(&req)?;
                let text = completions[0].text.clone();
                let (score, ok) = match mechanism {
                    Mechanism::CotBinary => parse_cot_binary(&text),
                    _ => parse_cot_score(&text),
                };
                (text, score, ok)
            }
            Mechanism::Tournament => unreachable!("rejected above"),
        };
        Ok(VerificationRecord {
            prompt_id: prompt.prompt_id.clone(),
            gen_index: generation.gen_index,
            mechanism,
            raw_text,
            proxy_utility,
            parse_ok,
        })
    }

    pub fn compare(
        &self,
        task: &TaskSpec,
        prompt: &PromptInstance,
        a: &Generation,
        b: &Generation,
        nonce: u64,
    ) -> Result<(PairWinner, String, bool)> {
        let rendered = render_tournament_prompt(task, &prompt.question, &a.text, &b.text)?;
        let req = CompletionRequest {
            prompt: rendered,
            n: 1,
            max_tokens: self.verify_sampling.max_tokens,
            temperature: self.verify_sampling.temperature,
            top_p: self.verify_sampling.top_p,
            seed: mix_seed(
                self.verify_sampling.seed,
                &[
                    "cmp",
                    &prompt.prompt_id,
                    &a.gen_index.to_string(),
                    &b.gen_index.to_string(),
                    &nonce.to_string(),
                ],
            ),
            top_logprobs: None,
            stop: Vec::new(),
        };
        let completions = self.backend.complete(&req)?;
        let text = completions[0].text.clone();
        let (winner, ok) = parse_tournament(&text);
        Ok((winner, text, ok))
    }
}
