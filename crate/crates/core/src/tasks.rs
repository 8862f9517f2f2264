//! Task adapters: prompt rendering with few-shot exemplars, answer matching
//! for math and trivia tasks, and the sudoku matcher built on the exact
//! oracle.

use alloc::borrow::ToOwned;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::sudoku::{self, SudokuGrid};
use crate::types::{Gold, MatchMode, MatchRule, Mechanism, PromptInstance, SpecError, TaskSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TaskError {
    #[error("no verification template configured for mechanism {0}")]
    MissingTemplate(Mechanism),
    #[error("candidate set is empty")]
    EmptyCandidates,
    #[error("task uses a custom match rule; built-in matchers cannot score it")]
    CustomRule,
    #[error("gold payload does not fit match rule {rule:?} for prompt {prompt_id}")]
    GoldMismatch {
        rule: MatchRule,
        prompt_id: String,
    },
    #[error("sudoku question is not a valid puzzle grid: {0}")]
    BadPuzzle(#[from] sudoku::SudokuError),
    #[error(transparent)]
    Spec(#[from] SpecError),
}

fn substitute(template: &str, pairs: &[(&str, &str)]) -> String {
    let mut out = template.to_owned();
    for (name, value) in pairs {
        let mut pattern = String::with_capacity(name.len() + 2);
        pattern.push('{');
        pattern.push_str(name);
        pattern.push('}');
        out = out.replace(&pattern, value);
    }
    out
}

/// Renders the generation prompt: each few-shot exemplar is the template with
/// its question substituted and its answer appended, then the real question
/// fills the final template copy, ending at the answer cue.
pub fn render_generation_prompt(task: &TaskSpec, question: &str) -> String {
    let mut out = String::new();
    for exemplar in &task.few_shot {
        out.push_str(&substitute(&task.gen_template, &[("problem", &exemplar.question)]));
        out.push(' ');
        out.push_str(&exemplar.answer);
        out.push_str("\n\n");
    }
    out.push_str(&substitute(&task.gen_template, &[("problem", question)]));
    out
}

/// Renders a single-generation verification prompt (MC, CoT-Binary,
/// CoT-Score).
pub fn render_verification_prompt(
    task: &TaskSpec,
    mechanism: Mechanism,
    question: &str,
    generation: &str,
) -> Result<String, TaskError> {
    let template = task
        .ver_templates
        .get(&mechanism)
        .ok_or(TaskError::MissingTemplate(mechanism))?;
    Ok(substitute(
        template,
        &[("problem", question), ("generation", generation)],
    ))
}

/// Renders the pairwise comparison prompt with the contenders in A/B order.
pub fn render_tournament_prompt(
    task: &TaskSpec,
    question: &str,
    generation_a: &str,
    generation_b: &str,
) -> Result<String, TaskError> {
    let template = task
        .ver_templates
        .get(&Mechanism::Tournament)
        .ok_or(TaskError::MissingTemplate(Mechanism::Tournament))?;
    Ok(substitute(
        template,
        &[
            ("problem", question),
            ("generation1", generation_a),
            ("generation2", generation_b),
        ],
    ))
}

/// Exact decimal in canonical form: no leading/trailing zero digits, zero is
/// positive with empty digits. Equality on this form is exact numeric
/// equality for arbitrary-length decimals.
#[derive(Debug, Clone, PartialEq, Eq)]
struct CanonicalDecimal {
    negative: bool,
    int_digits: String,
    frac_digits: String,
}

fn canonical_decimal(raw: &str) -> Option<CanonicalDecimal> {
    let s = raw.trim();
    let (negative, s) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = match s.split_once('.') {
        Some((i, f)) => (i, f),
        None => (s, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit())
        || !frac_part.bytes().all(|b| b.is_ascii_digit())
    {
        return None;
    }
    let int_digits = int_part.trim_start_matches('0').to_string();
    let frac_digits = frac_part.trim_end_matches('0').to_string();
    if int_digits.is_empty() && frac_digits.is_empty() {
        // Zero has one canonical form regardless of sign.
        return Some(CanonicalDecimal {
            negative: false,
            int_digits,
            frac_digits,
        });
    }
    Some(CanonicalDecimal {
        negative,
        int_digits,
        frac_digits,
    })
}

/// Strips currency/grouping noise from an answer token: surrounding space,
/// leading `$`, commas, one trailing period.
fn normalize_numeric_token(raw: &str) -> String {
    let mut s = raw.trim();
    s = s.strip_prefix('$').unwrap_or(s).trim();
    let mut out: String = s.chars().filter(|&c| c != ',').collect();
    if out.ends_with('.') {
        out.pop();
    }
    out.trim().to_string()
}

/// Numeric equality when both sides parse as decimals, else case-insensitive
/// string equality, after normalization.
pub fn answers_equal(left: &str, right: &str) -> bool {
    let l = normalize_numeric_token(left);
    let r = normalize_numeric_token(right);
    match (canonical_decimal(&l), canonical_decimal(&r)) {
        (Some(a), Some(b)) => a == b,
        _ => l.eq_ignore_ascii_case(&r),
    }
}

/// Extracts the answer following the final occurrence of the anchor phrase,
/// up to the end of that line.
pub fn extract_tail_answer(text: &str, answer_phrase: &str) -> Option<String> {
    if answer_phrase.is_empty() {
        return None;
    }
    let hay = text.to_ascii_lowercase();
    let needle = answer_phrase.to_ascii_lowercase();
    let at = hay.rfind(&needle)?;
    let rest = &text[at + needle.len()..];
    let line = rest.split('\n').next().unwrap_or("");
    let answer = line.trim().trim_start_matches(':').trim();
    let answer = answer.strip_suffix('.').unwrap_or(answer).trim();
    if answer.is_empty() {
        None
    } else {
        Some(answer.to_string())
    }
}

/// Finds the last number-shaped token in the text (optional sign, digit
/// grouping commas, optional decimal part).
pub fn last_number(text: &str) -> Option<String> {
    let bytes = text.as_bytes();
    let mut best: Option<(usize, usize)> = None;
    let mut at = 0usize;
    while at < bytes.len() {
        if bytes[at].is_ascii_digit() {
            let mut start = at;
            if start > 0 && bytes[start - 1] == b'-' {
                start -= 1;
            }
            let mut end = at;
            while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b',') {
                end += 1;
            }
            // Trailing comma is a separator, not grouping.
            while end > at && bytes[end - 1] == b',' {
                end -= 1;
            }
            if end < bytes.len() && bytes[end] == b'.' {
                let mut frac_end = end + 1;
                while frac_end < bytes.len() && bytes[frac_end].is_ascii_digit() {
                    frac_end += 1;
                }
                if frac_end > end + 1 {
                    end = frac_end;
                }
            }
            best = Some((start, end));
            at = end;
        } else {
            at += 1;
        }
    }
    best.map(|(start, end)| {
        core::str::from_utf8(&bytes[start..end])
            .expect("number token is ASCII")
            .to_string()
    })
}

/// Tail-answer matching. Exact mode requires the anchored answer phrase;
/// flexible mode additionally accepts the last number in the text, so an
/// exact match always implies a flexible match. Returns 1.0 or 0.0.
pub fn match_exact_tail(text: &str, gold: &str, mode: MatchMode, answer_phrase: &str) -> f64 {
    let anchored = extract_tail_answer(text, answer_phrase)
        .map(|ans| answers_equal(&ans, gold))
        .unwrap_or(false);
    let matched = match mode {
        MatchMode::Exact => anchored,
        MatchMode::Flexible => {
            anchored
                || last_number(text)
                    .map(|num| answers_equal(&num, gold))
                    .unwrap_or(false)
        }
    };
    if matched {
        1.0
    } else {
        0.0
    }
}

/// Lowercases, removes punctuation, drops standalone articles, and collapses
/// whitespace.
fn normalize_candidate(raw: &str) -> String {
    let lowered = raw.to_lowercase();
    let cleaned: String = lowered
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    let words: Vec<&str> = cleaned
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect();
    words.join(" ")
}

/// 1.0 iff the normalized answer equals any normalized candidate.
pub fn match_candidates(answer_text: &str, candidates: &[String]) -> Result<f64, TaskError> {
    if candidates.is_empty() {
        return Err(TaskError::EmptyCandidates);
    }
    let answer = normalize_candidate(answer_text);
    let hit = candidates
        .iter()
        .any(|c| normalize_candidate(c) == answer && !answer.is_empty());
    Ok(if hit { 1.0 } else { 0.0 })
}

/// Extracts the last run of four consecutive grid-shaped lines as a grid.
pub fn extract_last_grid(text: &str) -> Option<SudokuGrid> {
    let lines: Vec<&str> = text.lines().collect();
    let mut found = None;
    let mut run = 0usize;
    for (i, line) in lines.iter().enumerate() {
        if SudokuGrid::line_shaped(line) {
            run += 1;
            if run >= 4 {
                found = Some(i);
            }
        } else {
            run = 0;
        }
    }
    let end = found?;
    let window = lines[end - 3..=end].join("\n");
    SudokuGrid::parse(&window).ok()
}

/// Utility and parsed answer for one generation text.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedUtility {
    pub utility: f64,
    pub parsed_answer: Option<String>,
}

/// Scores a generation against its prompt under the task's match rule,
/// returning the utility (u_max on match, u_min otherwise) and the parsed
/// answer when one was found.
pub fn score_generation(
    task: &TaskSpec,
    prompt: &PromptInstance,
    text: &str,
) -> Result<ParsedUtility, TaskError> {
    let scale = |matched: bool| if matched { task.u_max } else { task.u_min };
    match (task.match_rule, &prompt.gold) {
        (MatchRule::ExactTailAnswer, Gold::Answer(gold)) => {
            let anchored = extract_tail_answer(text, &task.answer_phrase);
            let parsed_answer = match task.match_mode {
                MatchMode::Exact => anchored,
                MatchMode::Flexible => anchored.or_else(|| last_number(text)),
            };
            let utility = match_exact_tail(text, gold, task.match_mode, &task.answer_phrase);
            Ok(ParsedUtility {
                utility: scale(utility == 1.0),
                parsed_answer,
            })
        }
        (MatchRule::CandidateSet, Gold::Candidates(candidates)) => {
            let parsed_answer = extract_tail_answer(text, &task.answer_phrase);
            let answer_text = parsed_answer.as_deref().unwrap_or(text);
            let utility = match_candidates(answer_text, candidates)?;
            Ok(ParsedUtility {
                utility: scale(utility == 1.0),
                parsed_answer: parsed_answer.or_else(|| Some(text.trim().to_string())),
            })
        }
        (MatchRule::Sudoku, Gold::SudokuSolution(_)) => {
            let puzzle = SudokuGrid::parse(&prompt.question)?;
            match extract_last_grid(text) {
                Some(candidate) => Ok(ParsedUtility {
                    utility: scale(sudoku::validate(&puzzle, &candidate)),
                    parsed_answer: Some(candidate.to_string()),
                }),
                None => Ok(ParsedUtility {
                    utility: task.u_min,
                    parsed_answer: None,
                }),
            }
        }
        (MatchRule::Custom, _) => Err(TaskError::CustomRule),
        (rule, _) => Err(TaskError::GoldMismatch {
            rule,
            prompt_id: prompt.prompt_id.clone(),
        }),
    }
}
