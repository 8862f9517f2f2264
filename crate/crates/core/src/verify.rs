//! The four verification mechanisms: MC token-probability utility, CoT
//! verdict/score parsing, tournament bracket execution, and ensemble
//! combination.
//!
//! Every parser returns `(score, parse_ok)`; unparsable output maps to the
//! worst score with `parse_ok = false` so failures are counted, never
//! silently dropped.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Token variants whose probabilities are summed for the MC probe.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McTokenConfig {
    pub positive_variants: Vec<String>,
    pub negative_variants: Vec<String>,
    /// How many top logprobs to request from the backend.
    pub top_logprobs_k: usize,
}

impl Default for McTokenConfig {
    fn default() -> Self {
        McTokenConfig {
            positive_variants: alloc::vec![String::from("Correct"), String::from(" Correct")],
            negative_variants: alloc::vec![String::from("Incorrect"), String::from(" Incorrect")],
            top_logprobs_k: 20,
        }
    }
}

impl McTokenConfig {
    pub fn validate(&self) -> Result<(), VerifyError> {
        if self.positive_variants.is_empty() || self.negative_variants.is_empty() {
            return Err(VerifyError::EmptyVariants);
        }
        for v in &self.positive_variants {
            if self.negative_variants.contains(v) {
                return Err(VerifyError::OverlappingVariants(v.clone()));
            }
        }
        Ok(())
    }
}

/// Which side of a pairwise comparison was preferred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairWinner {
    A,
    B,
}

/// Outcome of a single-elimination bracket.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TournamentResult {
    /// Survivor sets per round; `rounds[0]` is the seeded entrant set of size
    /// 2^r and `rounds[k]` has 2^(r−k) members.
    pub rounds: Vec<Vec<u32>>,
    pub winner: u32,
    /// Unflagged comparisons won by the generation shown first.
    pub first_position_wins: usize,
    pub total_comparisons: usize,
    pub flagged_comparisons: usize,
}

impl TournamentResult {
    /// Share of unflagged comparisons won by position A, if any were counted.
    pub fn first_position_rate(&self) -> Option<f64> {
        let unflagged = self.total_comparisons - self.flagged_comparisons;
        if unflagged == 0 {
            None
        } else {
            Some(self.first_position_wins as f64 / unflagged as f64)
        }
    }

    /// Number of rounds a generation survived: 0 for first-round exits (and
    /// non-entrants), r for the winner.
    pub fn rounds_survived(&self, gen_index: u32) -> u32 {
        let mut survived = 0u32;
        for (k, set) in self.rounds.iter().enumerate().skip(1) {
            if set.contains(&gen_index) {
                survived = k as u32;
            }
        }
        survived
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("token probability {0} is negative")]
    NegativeProbability(f64),
    #[error("MC token variant lists must be non-empty")]
    EmptyVariants,
    #[error("token variant {0:?} appears in both positive and negative lists")]
    OverlappingVariants(String),
    #[error("tournament needs at least one round")]
    ZeroRounds,
    #[error("tournament over 2^{rounds} needs {needed} generations, got {got}")]
    TooFewGenerations {
        rounds: u32,
        needed: usize,
        got: usize,
    },
    #[error("comparison batch returned {got} results for {expected} pairs")]
    BatchSizeMismatch { expected: usize, got: usize },
    #[error("mask lengths differ: {left} vs {right}")]
    MaskLengthMismatch { left: usize, right: usize },
    #[error("ensemble needs at least one mask")]
    NoMasks,
}

/// Sums `exp(logprob)` over the entries whose token is one of `variants`.
/// Tokens absent from the list contribute nothing.
pub fn sum_token_probs(logprobs: &[(String, f64)], variants: &[String]) -> f64 {
    logprobs
        .iter()
        .filter(|(token, _)| variants.iter().any(|v| v == token))
        .map(|&(_, lp)| crate::math::exp(lp))
        .sum()
}

/// Renormalized probability of the positive token: `p⁺ / (p⁺ + p⁻)`, with the
/// probabilities already summed over token variants. When neither token
/// appeared in the returned logprobs (both zero) the score is a neutral 0.5
/// with `ok = false`.
pub fn mc_utility(prob_positive: f64, prob_negative: f64) -> Result<(f64, bool), VerifyError> {
    if prob_positive < 0.0 {
        return Err(VerifyError::NegativeProbability(prob_positive));
    }
    if prob_negative < 0.0 {
        return Err(VerifyError::NegativeProbability(prob_negative));
    }
    let total = prob_positive + prob_negative;
    if total == 0.0 {
        return Ok((0.5, false));
    }
    Ok((prob_positive / total, true))
}

/// Byte offset and polarity of a standalone correctness word.
fn correctness_markers(lower: &[u8]) -> Vec<(usize, bool)> {
    const WORD: &[u8] = b"correct";
    let boundary = |b: Option<&u8>| b.is_none_or(|&c| !c.is_ascii_alphanumeric());
    let mut out = Vec::new();
    let mut at = 0usize;
    while at + WORD.len() <= lower.len() {
        if &lower[at..at + WORD.len()] == WORD {
            let after_ok = boundary(lower.get(at + WORD.len()));
            let negated = at >= 2 && &lower[at - 2..at] == b"in" && boundary(at.checked_sub(3).and_then(|i| lower.get(i)));
            if after_ok {
                if negated {
                    out.push((at - 2, false));
                } else if boundary(at.checked_sub(1).and_then(|i| lower.get(i))) {
                    out.push((at, true));
                }
            }
            at += WORD.len();
        } else {
            at += 1;
        }
    }
    out
}

/// Scans for the final standalone `correct` / `incorrect` verdict. Bracketed
/// and mixed-case forms are accepted; derived words like "correctness" are
/// not verdicts. No verdict found yields the worst score `(0, false)`.
pub fn parse_cot_binary(text: &str) -> (f64, bool) {
    let lower = text.to_ascii_lowercase();
    match correctness_markers(lower.as_bytes()).last() {
        Some(&(_, positive)) => (if positive { 1.0 } else { 0.0 }, true),
        None => (0.0, false),
    }
}

/// Parses the integer after a `score` marker, skipping separator characters.
fn integer_after_marker(lower: &[u8], mut at: usize) -> Option<i64> {
    while at < lower.len() && matches!(lower[at], b' ' | b':' | b'<' | b'=' | b'*') {
        at += 1;
    }
    let negative = at < lower.len() && lower[at] == b'-';
    if negative {
        at += 1;
    }
    let start = at;
    while at < lower.len() && lower[at].is_ascii_digit() {
        at += 1;
    }
    if at == start || at - start > 6 {
        return None;
    }
    let mut value: i64 = 0;
    for &b in &lower[start..at] {
        value = value * 10 + i64::from(b - b'0');
    }
    Some(if negative { -value } else { value })
}

/// Finds the final `Score: <k>` marker. A missing marker or a score outside
/// 1..=10 yields the worst score `(1, false)`.
pub fn parse_cot_score(text: &str) -> (f64, bool) {
    const MARKER: &[u8] = b"score";
    let lower = text.to_ascii_lowercase();
    let bytes = lower.as_bytes();
    let mut last: Option<i64> = None;
    let mut at = 0usize;
    while at + MARKER.len() <= bytes.len() {
        if &bytes[at..at + MARKER.len()] == MARKER {
            if let Some(k) = integer_after_marker(bytes, at + MARKER.len()) {
                last = Some(k);
            }
            at += MARKER.len();
        } else {
            at += 1;
        }
    }
    match last {
        Some(k) if (1..=10).contains(&k) => (k as f64, true),
        _ => (1.0, false),
    }
}

/// Finds the final `Preferred solution: <A> or <B>` marker. Unparsable output
/// defaults to `(A, false)`; such comparisons are excluded from position-bias
/// statistics.
pub fn parse_tournament(text: &str) -> (PairWinner, bool) {
    const MARKER: &[u8] = b"preferred solution";
    let lower = text.to_ascii_lowercase();
    let bytes = lower.as_bytes();
    let mut last: Option<PairWinner> = None;
    let mut at = 0usize;
    while at + MARKER.len() <= bytes.len() {
        if &bytes[at..at + MARKER.len()] == MARKER {
            let mut cursor = at + MARKER.len();
            while cursor < bytes.len() && matches!(bytes[cursor], b' ' | b':' | b'<' | b'*') {
                cursor += 1;
            }
            let standalone = |i: usize| {
                bytes
                    .get(i + 1)
                    .is_none_or(|&c| !c.is_ascii_alphanumeric())
            };
            match bytes.get(cursor) {
                Some(b'a') if standalone(cursor) => last = Some(PairWinner::A),
                Some(b'b') if standalone(cursor) => last = Some(PairWinner::B),
                _ => {}
            }
            at += MARKER.len();
        } else {
            at += 1;
        }
    }
    match last {
        Some(w) => (w, true),
        None => (PairWinner::A, false),
    }
}

/// Runs the bracket with one callback invocation per comparison. Callback
/// errors become flagged default-A results for that comparison only.
pub fn run_tournament<E>(
    gen_indices: &[u32],
    rounds: u32,
    seed: u64,
    mut compare: impl FnMut(u32, u32) -> Result<(PairWinner, bool), E>,
) -> Result<TournamentResult, VerifyError> {
    run_tournament_batched(gen_indices, rounds, seed, |pairs| {
        pairs.iter().map(|&(a, b)| compare(a, b)).collect()
    })
}

/// Runs the bracket one round at a time: each round's disjoint pairs are
/// handed to the callback in a single batch (callers may judge them in
/// parallel), and rounds stay strictly sequential. Entrants beyond 2^r are
/// removed by a seeded subsample; pairing order is reshuffled each round with
/// the same seeded stream.
pub fn run_tournament_batched<E>(
    gen_indices: &[u32],
    rounds: u32,
    seed: u64,
    mut compare_round: impl FnMut(&[(u32, u32)]) -> Vec<Result<(PairWinner, bool), E>>,
) -> Result<TournamentResult, VerifyError> {
    if rounds == 0 {
        return Err(VerifyError::ZeroRounds);
    }
    let needed = 1usize << rounds;
    if gen_indices.len() < needed {
        return Err(VerifyError::TooFewGenerations {
            rounds,
            needed,
            got: gen_indices.len(),
        });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut survivors: Vec<u32> = gen_indices.to_vec();
    survivors.shuffle(&mut rng);
    survivors.truncate(needed);

    let mut round_sets: Vec<Vec<u32>> = alloc::vec![survivors.clone()];
    let mut first_position_wins = 0usize;
    let mut total_comparisons = 0usize;
    let mut flagged_comparisons = 0usize;

    for _ in 0..rounds {
        survivors.shuffle(&mut rng);
        let pairs: Vec<(u32, u32)> = survivors
            .chunks_exact(2)
            .map(|pair| (pair[0], pair[1]))
            .collect();
        let outcomes = compare_round(&pairs);
        if outcomes.len() != pairs.len() {
            return Err(VerifyError::BatchSizeMismatch {
                expected: pairs.len(),
                got: outcomes.len(),
            });
        }
        let mut next = Vec::with_capacity(pairs.len());
        for (&(a, b), outcome) in pairs.iter().zip(outcomes) {
            let (winner, ok) = outcome.unwrap_or((PairWinner::A, false));
            total_comparisons += 1;
            if !ok {
                flagged_comparisons += 1;
            } else if winner == PairWinner::A {
                first_position_wins += 1;
            }
            next.push(match winner {
                PairWinner::A => a,
                PairWinner::B => b,
            });
        }
        survivors = next;
        round_sets.push(survivors.clone());
    }

    Ok(TournamentResult {
        winner: survivors[0],
        rounds: round_sets,
        first_position_wins,
        total_comparisons,
        flagged_comparisons,
    })
}

/// Elementwise conjunction of keep-masks: a sample survives the ensemble only
/// if every mechanism kept it.
pub fn ensemble_and(masks: &[Vec<bool>]) -> Result<Vec<bool>, VerifyError> {
    let first = masks.first().ok_or(VerifyError::NoMasks)?;
    let mut out = first.clone();
    for mask in &masks[1..] {
        if mask.len() != out.len() {
            return Err(VerifyError::MaskLengthMismatch {
                left: out.len(),
                right: mask.len(),
            });
        }
        for (acc, &m) in out.iter_mut().zip(mask) {
            *acc = *acc && m;
        }
    }
    Ok(out)
}
