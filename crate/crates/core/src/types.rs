//! Domain types shared by every module: tasks, prompts, generations,
//! verification records, sampling parameters, and weight functions.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sudoku::SudokuGrid;

/// Verification mechanism used to score a generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    /// Single-token probe scored by the renormalized probability of the
    /// positive token.
    Mc,
    /// Free-form justification ending in a correct/incorrect verdict.
    CotBinary,
    /// Free-form justification ending in an integer score from 1 to 10.
    CotScore,
    /// Single-elimination bracket of pairwise comparisons; the proxy utility
    /// of a generation is the number of rounds it survived.
    Tournament,
}

impl Mechanism {
    pub const ALL: [Mechanism; 4] = [
        Mechanism::Mc,
        Mechanism::CotBinary,
        Mechanism::CotScore,
        Mechanism::Tournament,
    ];

    /// Stable snake_case name, used in file names and serialized records.
    pub fn as_str(&self) -> &'static str {
        match self {
            Mechanism::Mc => "mc",
            Mechanism::CotBinary => "cot_binary",
            Mechanism::CotScore => "cot_score",
            Mechanism::Tournament => "tournament",
        }
    }

    /// Human-facing label for tables.
    pub fn label(&self) -> &'static str {
        match self {
            Mechanism::Mc => "MC",
            Mechanism::CotBinary => "CoT-B",
            Mechanism::CotScore => "CoT-S",
            Mechanism::Tournament => "To",
        }
    }

    pub fn parse(s: &str) -> Option<Mechanism> {
        match s {
            "mc" => Some(Mechanism::Mc),
            "cot_binary" => Some(Mechanism::CotBinary),
            "cot_score" => Some(Mechanism::CotScore),
            "tournament" => Some(Mechanism::Tournament),
            _ => None,
        }
    }
}

impl core::fmt::Display for Mechanism {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How a generation's final answer is matched against the gold payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchRule {
    /// The answer must appear at the tail of the response; see
    /// [`crate::tasks::match_exact_tail`].
    ExactTailAnswer,
    /// The answer must equal one of a set of acceptable strings.
    CandidateSet,
    /// The answer is a completed 4x4 sudoku grid checked by the exact
    /// validator.
    Sudoku,
    /// Utilities are supplied externally; the built-in matchers refuse it.
    Custom,
}

/// Strictness of tail-answer matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Accept the anchored answer phrase, or fall back to the last number in
    /// the text. Strictly more permissive than [`MatchMode::Exact`].
    Flexible,
    /// Require the literal answer phrase.
    Exact,
}

/// One few-shot exemplar shown before the real question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub question: String,
    pub answer: String,
}

/// Ground-truth payload for a prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gold {
    /// A single gold answer string.
    Answer(String),
    /// Any of these normalized strings is accepted.
    Candidates(Vec<String>),
    /// The unique solution grid of a sudoku puzzle.
    SudokuSolution(SudokuGrid),
}

impl Gold {
    pub fn is_empty(&self) -> bool {
        match self {
            Gold::Answer(a) => a.trim().is_empty(),
            Gold::Candidates(c) => c.is_empty() || c.iter().all(|s| s.trim().is_empty()),
            Gold::SudokuSolution(_) => false,
        }
    }
}

/// A prompt together with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptInstance {
    pub prompt_id: String,
    pub question: String,
    pub gold: Gold,
}

impl PromptInstance {
    pub fn validate(&self) -> Result<(), SpecError> {
        if self.prompt_id.is_empty() {
            return Err(SpecError::EmptyPromptId);
        }
        if self.gold.is_empty() {
            return Err(SpecError::EmptyGold {
                prompt_id: self.prompt_id.clone(),
            });
        }
        Ok(())
    }
}

/// Sampling parameters for generation and verification completions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub top_p: f64,
    pub temperature: f64,
    pub max_tokens: u32,
    pub n_generations: u32,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            top_p: 0.9,
            temperature: 0.7,
            max_tokens: 512,
            n_generations: 128,
            seed: 0,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), SpecError> {
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(SpecError::InvalidTopP(self.top_p));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(SpecError::InvalidTemperature(self.temperature));
        }
        if self.n_generations < 1 {
            return Err(SpecError::InvalidGenerationCount(self.n_generations));
        }
        Ok(())
    }
}

/// One sampled response with its parsed answer and ground-truth utility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub prompt_id: String,
    pub gen_index: u32,
    pub text: String,
    pub parsed_answer: Option<String>,
    pub utility: f64,
    pub sampling: SamplingConfig,
}

impl Generation {
    /// Checks the utility bounds and the rule that a missing parsed answer
    /// forces the worst utility under exact-match rules.
    pub fn validate(&self, task: &TaskSpec) -> Result<(), SpecError> {
        if !(self.utility >= task.u_min && self.utility <= task.u_max) {
            return Err(SpecError::UtilityOutOfBounds {
                utility: self.utility,
                u_min: task.u_min,
                u_max: task.u_max,
            });
        }
        let exactish = matches!(
            task.match_rule,
            MatchRule::ExactTailAnswer | MatchRule::CandidateSet | MatchRule::Sudoku
        );
        if exactish && self.parsed_answer.is_none() && self.utility != task.u_min {
            return Err(SpecError::UnparsedAnswerUtility {
                utility: self.utility,
                u_min: task.u_min,
            });
        }
        Ok(())
    }
}

/// One proxy-utility judgment of a generation by one mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationRecord {
    pub prompt_id: String,
    pub gen_index: u32,
    pub mechanism: Mechanism,
    pub raw_text: String,
    pub proxy_utility: f64,
    pub parse_ok: bool,
}

impl VerificationRecord {
    /// Checks the mechanism-specific score range.
    pub fn validate(&self) -> Result<(), SpecError> {
        let ok = match self.mechanism {
            Mechanism::Mc => (0.0..=1.0).contains(&self.proxy_utility),
            Mechanism::CotBinary => self.proxy_utility == 0.0 || self.proxy_utility == 1.0,
            Mechanism::CotScore => {
                crate::math::fract(self.proxy_utility) == 0.0
                    && (1.0..=10.0).contains(&self.proxy_utility)
            }
            // Rounds survived in the bracket; bounded by the round count, which
            // the record does not carry.
            Mechanism::Tournament => self.proxy_utility >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(SpecError::ProxyUtilityOutOfRange {
                mechanism: self.mechanism,
                proxy_utility: self.proxy_utility,
            })
        }
    }
}

/// Maps a verifier score to a nonnegative reweighting factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightFunction {
    /// Keep scores at or above a fixed threshold.
    IndicatorGlobal { tau: f64 },
    /// Keep scores at or above the per-batch nearest-rank quantile.
    IndicatorQuantile { n: f64 },
    /// Soft weighting `exp(score / beta)`.
    Exponential { beta: f64 },
    /// Weight 1 everywhere; leaves the distribution unchanged.
    Constant,
}

impl WeightFunction {
    pub fn validate(&self) -> Result<(), SpecError> {
        match *self {
            WeightFunction::IndicatorGlobal { tau } => {
                if tau.is_finite() {
                    Ok(())
                } else {
                    Err(SpecError::InvalidThreshold(tau))
                }
            }
            WeightFunction::IndicatorQuantile { n } => {
                if (0.0..1.0).contains(&n) {
                    Ok(())
                } else {
                    Err(SpecError::InvalidQuantile(n))
                }
            }
            WeightFunction::Exponential { beta } => {
                if beta > 0.0 && beta.is_finite() {
                    Ok(())
                } else {
                    Err(SpecError::InvalidBeta(beta))
                }
            }
            WeightFunction::Constant => Ok(()),
        }
    }

    /// File-name-safe identifier, e.g. `tau-0.75`, `top-0.7`, `exp-0.5`,
    /// `constant`.
    pub fn slug(&self) -> String {
        use core::fmt::Write as _;
        let mut s = String::new();
        match *self {
            WeightFunction::IndicatorGlobal { tau } => {
                let _ = write!(s, "tau-{tau}");
            }
            WeightFunction::IndicatorQuantile { n } => {
                let _ = write!(s, "top-{n}");
            }
            WeightFunction::Exponential { beta } => {
                let _ = write!(s, "exp-{beta}");
            }
            WeightFunction::Constant => s.push_str("constant"),
        }
        s
    }
}

/// Task definition: utility bounds, matching rule, prompt templates, and
/// few-shot exemplars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub u_min: f64,
    pub u_max: f64,
    pub match_rule: MatchRule,
    pub match_mode: MatchMode,
    /// Literal phrase anchoring the tail answer, e.g. "The answer is".
    pub answer_phrase: String,
    /// Generation template; must contain exactly the `{problem}` placeholder.
    pub gen_template: String,
    /// Verification templates keyed by mechanism.
    pub ver_templates: BTreeMap<Mechanism, String>,
    pub few_shot: Vec<Exemplar>,
    /// Expected number of few-shot exemplars.
    pub shots: usize,
}

impl TaskSpec {
    pub const DEFAULT_SHOTS: usize = 4;

    pub fn validate(&self) -> Result<(), SpecError> {
        // partial_cmp so NaN bounds fail validation instead of slipping past.
        if self.u_min.partial_cmp(&self.u_max) != Some(core::cmp::Ordering::Less) {
            return Err(SpecError::UtilityBounds {
                u_min: self.u_min,
                u_max: self.u_max,
            });
        }
        if self.few_shot.len() != self.shots {
            return Err(SpecError::ShotCountMismatch {
                expected: self.shots,
                actual: self.few_shot.len(),
            });
        }
        check_placeholders(&self.gen_template, &["problem"], "gen_template")?;
        for (mech, template) in &self.ver_templates {
            let expected: &[&str] = match mech {
                Mechanism::Tournament => &["problem", "generation1", "generation2"],
                _ => &["problem", "generation"],
            };
            check_placeholders(template, expected, mech.as_str())?;
        }
        Ok(())
    }
}

/// Extracts `{name}` placeholders and requires the set to equal `expected`.
fn check_placeholders(
    template: &str,
    expected: &[&str],
    context: &str,
) -> Result<(), SpecError> {
    let mut found: Vec<&str> = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let tail = &rest[open + 1..];
        match tail.find('}') {
            Some(close) => {
                let name = &tail[..close];
                if name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_')
                    && !name.is_empty()
                {
                    found.push(name);
                }
                rest = &tail[close + 1..];
            }
            None => break,
        }
    }
    for want in expected {
        if !found.contains(want) {
            return Err(SpecError::MissingPlaceholder {
                context: String::from(context),
                placeholder: String::from(*want),
            });
        }
    }
    for got in &found {
        if !expected.contains(got) {
            return Err(SpecError::UnknownPlaceholder {
                context: String::from(context),
                placeholder: String::from(*got),
            });
        }
    }
    Ok(())
}

/// Validation failures for the domain types.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("utility bounds invalid: u_min {u_min} must be strictly below u_max {u_max}")]
    UtilityBounds { u_min: f64, u_max: f64 },
    #[error("expected {expected} few-shot exemplars, got {actual}")]
    ShotCountMismatch { expected: usize, actual: usize },
    #[error("{context} template is missing placeholder {{{placeholder}}}")]
    MissingPlaceholder { context: String, placeholder: String },
    #[error("{context} template has unexpected placeholder {{{placeholder}}}")]
    UnknownPlaceholder { context: String, placeholder: String },
    #[error("prompt_id must be non-empty")]
    EmptyPromptId,
    #[error("gold payload for prompt {prompt_id} is empty")]
    EmptyGold { prompt_id: String },
    #[error("top_p {0} outside (0, 1]")]
    InvalidTopP(f64),
    #[error("temperature {0} must be >= 0")]
    InvalidTemperature(f64),
    #[error("n_generations {0} must be >= 1")]
    InvalidGenerationCount(u32),
    #[error("utility {utility} outside [{u_min}, {u_max}]")]
    UtilityOutOfBounds {
        utility: f64,
        u_min: f64,
        u_max: f64,
    },
    #[error("generation without parsed answer must carry utility u_min = {u_min}, got {utility}")]
    UnparsedAnswerUtility { utility: f64, u_min: f64 },
    #[error("proxy utility {proxy_utility} out of range for mechanism {mechanism}")]
    ProxyUtilityOutOfRange {
        mechanism: Mechanism,
        proxy_utility: f64,
    },
    #[error("threshold {0} must be finite")]
    InvalidThreshold(f64),
    #[error("quantile {0} outside [0, 1)")]
    InvalidQuantile(f64),
    #[error("beta {0} must be positive and finite")]
    InvalidBeta(f64),
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn minimal_task() -> TaskSpec {
        TaskSpec {
            name: "t".to_string(),
            u_min: 0.0,
            u_max: 1.0,
            match_rule: MatchRule::ExactTailAnswer,
            match_mode: MatchMode::Flexible,
            answer_phrase: "The answer is".to_string(),
            gen_template: "Question: {problem}\nAnswer:".to_string(),
            ver_templates: BTreeMap::new(),
            few_shot: Vec::new(),
            shots: 0,
        }
    }

    #[test]
    fn task_validation_checks_bounds_and_shots() {
        let task = minimal_task();
        assert!(task.validate().is_ok());

        let mut bad = task.clone();
        bad.u_min = 1.0;
        assert!(matches!(
            bad.validate(),
            Err(SpecError::UtilityBounds { .. })
        ));

        let mut bad = task.clone();
        bad.shots = 4;
        assert!(matches!(
            bad.validate(),
            Err(SpecError::ShotCountMismatch { .. })
        ));
    }

    #[test]
    fn template_placeholders_must_match_exactly() {
        let mut task = minimal_task();
        task.gen_template = "no placeholder".to_string();
        assert!(matches!(
            task.validate(),
            Err(SpecError::MissingPlaceholder { .. })
        ));

        let mut task = minimal_task();
        task.gen_template = "{problem} {extra}".to_string();
        assert!(matches!(
            task.validate(),
            Err(SpecError::UnknownPlaceholder { .. })
        ));

        let mut task = minimal_task();
        task.ver_templates.insert(
            Mechanism::Tournament,
            "P: {problem}\nA: {generation1}\nB: {generation2}\n".to_string(),
        );
        assert!(task.validate().is_ok());
    }

    #[test]
    fn verification_record_ranges() {
        let mut rec = VerificationRecord {
            prompt_id: "p".to_string(),
            gen_index: 0,
            mechanism: Mechanism::Mc,
            raw_text: String::new(),
            proxy_utility: 0.5,
            parse_ok: true,
        };
        assert!(rec.validate().is_ok());
        rec.proxy_utility = 1.5;
        assert!(rec.validate().is_err());

        rec.mechanism = Mechanism::CotScore;
        rec.proxy_utility = 8.0;
        assert!(rec.validate().is_ok());
        rec.proxy_utility = 7.5;
        assert!(rec.validate().is_err());
        rec.proxy_utility = 11.0;
        assert!(rec.validate().is_err());

        rec.mechanism = Mechanism::CotBinary;
        rec.proxy_utility = 1.0;
        assert!(rec.validate().is_ok());
        rec.proxy_utility = 0.3;
        assert!(rec.validate().is_err());
    }

    #[test]
    fn generation_unparsed_answer_forces_floor_utility() {
        let task = minimal_task();
        let gen = Generation {
            prompt_id: "p".to_string(),
            gen_index: 0,
            text: "no answer here".to_string(),
            parsed_answer: None,
            utility: 1.0,
            sampling: SamplingConfig::default(),
        };
        assert!(gen.validate(&task).is_err());
        let gen = Generation {
            utility: 0.0,
            ..gen
        };
        assert!(gen.validate(&task).is_ok());
    }

    #[test]
    fn weight_function_slugs_and_validation() {
        assert_eq!(
            WeightFunction::IndicatorGlobal { tau: 0.75 }.slug(),
            "tau-0.75"
        );
        assert_eq!(WeightFunction::IndicatorQuantile { n: 0.7 }.slug(), "top-0.7");
        assert_eq!(WeightFunction::Exponential { beta: 0.5 }.slug(), "exp-0.5");
        assert_eq!(WeightFunction::Constant.slug(), "constant");

        assert!(WeightFunction::IndicatorQuantile { n: 1.0 }.validate().is_err());
        assert!(WeightFunction::Exponential { beta: 0.0 }.validate().is_err());
    }

    #[test]
    fn mechanism_round_trips_through_serde() {
        for mech in Mechanism::ALL {
            let json = serde_json::to_string(&mech).unwrap();
            assert_eq!(json, alloc::format!("\"{}\"", mech.as_str()));
            let back: Mechanism = serde_json::from_str(&json).unwrap();
            assert_eq!(back, mech);
        }
    }
}
