//! Programmable synthetic model with an exact update operator.
//!
//! Each prompt carries an explicit answer distribution with one designated
//! correct answer; the verifier is a confusion matrix (true-positive rate `a`,
//! false-positive rate `b`). Verifier output is rendered in each mechanism's
//! textual format and fed through the real parsers, so the whole pipeline is
//! exercised end-to-end at desk scale with known closed-form statistics.
//!
//! Determinism: every sampled record derives its own RNG from
//! (seed, spec seed, purpose, prompt_id, index), so records can be produced
//! in any order, in parallel, or resumed, and stay bit-identical.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math;
use crate::types::{Generation, Mechanism, SamplingConfig, VerificationRecord};
use crate::verify::{self, McTokenConfig, PairWinner};

/// Positive-token probability the synthetic verifier emits when it judges a
/// generation correct (the negative token gets the remainder).
pub const MC_EMIT_P: f64 = 0.9;
/// Score emitted on a positive CoT-Score judgment.
pub const SCORE_ACCEPT: i64 = 10;
/// Negative CoT-Score judgments draw uniformly from 1..=SCORE_REJECT_MAX.
pub const SCORE_REJECT_MAX: i64 = 7;

/// Answer distribution for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptModel {
    /// Answer string to probability; keys are the support.
    pub distribution: BTreeMap<String, f64>,
    /// The one correct answer (need not have positive mass).
    pub correct: String,
}

/// Full synthetic model: per-prompt distributions plus verifier confusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticModelSpec {
    pub prompts: BTreeMap<String, PromptModel>,
    /// P(judged correct | actually correct).
    pub tpr: f64,
    /// P(judged correct | actually incorrect).
    pub fpr: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("unknown prompt {0}")]
    UnknownPrompt(String),
    #[error("prompt {prompt_id}: answer probabilities sum to {sum}, expected 1")]
    BadDistribution { prompt_id: String, sum: f64 },
    #[error("prompt {prompt_id}: negative or non-finite probability {p} for {answer:?}")]
    BadProbability {
        prompt_id: String,
        answer: String,
        p: f64,
    },
    #[error("prompt {prompt_id}: empty answer distribution")]
    EmptyDistribution { prompt_id: String },
    #[error("prompt {prompt_id}: correct answer is empty")]
    EmptyCorrect { prompt_id: String },
    #[error("confusion rate {0} outside [0, 1]")]
    BadConfusion(f64),
    #[error("n must be >= 1")]
    ZeroGenerations,
    #[error("tournament verification is pairwise; use synthetic_compare")]
    TournamentIsPairwise,
}

impl SyntheticModelSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        for rate in [self.tpr, self.fpr] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(SynthError::BadConfusion(rate));
            }
        }
        for (prompt_id, model) in &self.prompts {
            if model.distribution.is_empty() {
                return Err(SynthError::EmptyDistribution {
                    prompt_id: prompt_id.clone(),
                });
            }
            if model.correct.is_empty() {
                return Err(SynthError::EmptyCorrect {
                    prompt_id: prompt_id.clone(),
                });
            }
            let mut sum = 0.0;
            for (answer, &p) in &model.distribution {
                if !p.is_finite() || p < 0.0 {
                    return Err(SynthError::BadProbability {
                        prompt_id: prompt_id.clone(),
                        answer: answer.clone(),
                        p,
                    });
                }
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(SynthError::BadDistribution {
                    prompt_id: prompt_id.clone(),
                    sum,
                });
            }
        }
        Ok(())
    }

    /// Probability mass on the correct answer for one prompt.
    pub fn correct_mass(&self, prompt_id: &str) -> Option<f64> {
        let model = self.prompts.get(prompt_id)?;
        Some(model.distribution.get(&model.correct).copied().unwrap_or(0.0))
    }
}

/// 64-bit FNV-1a over length-delimited parts; the per-record seed.
fn fnv1a64(parts: &[&[u8]]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            hash ^= u64::from(b);
            hash = hash.wrapping_mul(PRIME);
        }
    };
    for part in parts {
        eat(part);
        eat(&(part.len() as u64).to_le_bytes());
    }
    hash
}

fn record_rng(spec: &SyntheticModelSpec, seed: u64, purpose: &str, prompt_id: &str, index: u64) -> ChaCha12Rng {
    let hash = fnv1a64(&[
        &seed.to_le_bytes(),
        &spec.seed.to_le_bytes(),
        purpose.as_bytes(),
        prompt_id.as_bytes(),
        &index.to_le_bytes(),
    ]);
    ChaCha12Rng::seed_from_u64(hash)
}

fn draw_answer<'a>(model: &'a PromptModel, rng: &mut ChaCha12Rng) -> &'a str {
    let r: f64 = rng.random();
    let mut cum = 0.0;
    let mut last = model.correct.as_str();
    for (answer, &p) in &model.distribution {
        cum += p;
        last = answer;
        if r < cum {
            return answer;
        }
    }
    last
}

/// Samples `n` i.i.d. generations from the prompt's answer distribution,
/// rendered in the tail-answer format so the real matcher parses them.
pub fn synthetic_generate(
    spec: &SyntheticModelSpec,
    prompt_id: &str,
    n: u32,
    seed: u64,
    sampling: &SamplingConfig,
) -> Result<Vec<Generation>, SynthError> {
    if n == 0 {
        return Err(SynthError::ZeroGenerations);
    }
    let model = spec
        .prompts
        .get(prompt_id)
        .ok_or_else(|| SynthError::UnknownPrompt(prompt_id.to_string()))?;
    let mut out = Vec::with_capacity(n as usize);
    for gen_index in 0..n {
        let mut rng = record_rng(spec, seed, "gen", prompt_id, u64::from(gen_index));
        let answer = draw_answer(model, &mut rng).to_string();
        let utility = if answer == model.correct { 1.0 } else { 0.0 };
        out.push(Generation {
            prompt_id: prompt_id.to_string(),
            gen_index,
            text: format!("The answer is {answer}."),
            parsed_answer: Some(answer),
            utility,
            sampling: *sampling,
        });
    }
    Ok(out)
}

fn judge(spec: &SyntheticModelSpec, truly_correct: bool, rng: &mut ChaCha12Rng) -> bool {
    let p = if truly_correct { spec.tpr } else { spec.fpr };
    rng.random::<f64>() < p
}

/// Verifies one generation under one mechanism. The verdict is Bernoulli
/// (`tpr` if the generation is truly correct, `fpr` otherwise), rendered in
/// the mechanism's textual format, then parsed by the real parser.
pub fn synthetic_verify(
    spec: &SyntheticModelSpec,
    generation: &Generation,
    mechanism: Mechanism,
    seed: u64,
) -> Result<VerificationRecord, SynthError> {
    if mechanism == Mechanism::Tournament {
        return Err(SynthError::TournamentIsPairwise);
    }
    if !spec.prompts.contains_key(&generation.prompt_id) {
        return Err(SynthError::UnknownPrompt(generation.prompt_id.clone()));
    }
    let mut rng = record_rng(
        spec,
        seed,
        mechanism.as_str(),
        &generation.prompt_id,
        u64::from(generation.gen_index),
    );
    let truly_correct = generation.utility == 1.0;
    let verdict = judge(spec, truly_correct, &mut rng);

    let (raw_text, proxy_utility, parse_ok) = match mechanism {
        Mechanism::Mc => {
            let p_correct = if verdict { MC_EMIT_P } else { 1.0 - MC_EMIT_P };
            let logprobs = alloc::vec![
                (String::from(" Correct"), math::ln(p_correct)),
                (String::from(" Incorrect"), math::ln(1.0 - p_correct)),
            ];
            let cfg = McTokenConfig::default();
            let p_pos = verify::sum_token_probs(&logprobs, &cfg.positive_variants);
            let p_neg = verify::sum_token_probs(&logprobs, &cfg.negative_variants);
            let (score, ok) = verify::mc_utility(p_pos, p_neg).expect("probabilities nonnegative");
            let raw = format!(" Correct={:.6} Incorrect={:.6}", logprobs[0].1, logprobs[1].1);
            (raw, score, ok)
        }
        Mechanism::CotBinary => {
            let marker = if verdict { "<correct>" } else { "<incorrect>" };
            let raw = format!("The solution was checked step by step.\nCorrectness: {marker}");
            let (score, ok) = verify::parse_cot_binary(&raw);
            (raw, score, ok)
        }
        Mechanism::CotScore => {
            let k = if verdict {
                SCORE_ACCEPT
            } else {
                rng.random_range(1..=SCORE_REJECT_MAX)
            };
            let raw = format!("Evaluated the reasoning against the problem.\nScore: {k}");
            let (score, ok) = verify::parse_cot_score(&raw);
            (raw, score, ok)
        }
        Mechanism::Tournament => unreachable!("rejected above"),
    };

    Ok(VerificationRecord {
        prompt_id: generation.prompt_id.clone(),
        gen_index: generation.gen_index,
        mechanism,
        raw_text,
        proxy_utility,
        parse_ok,
    })
}

/// Pairwise judgment for tournament brackets: each side's correctness is
/// judged through the confusion matrix; a single judged-correct side wins,
/// ties flip a fair coin. Returns the rendered marker text as well.
pub fn synthetic_compare(
    spec: &SyntheticModelSpec,
    prompt_id: &str,
    a: (u32, bool),
    b: (u32, bool),
    nonce: u64,
    seed: u64,
) -> Result<(PairWinner, String, bool), SynthError> {
    if !spec.prompts.contains_key(prompt_id) {
        return Err(SynthError::UnknownPrompt(prompt_id.to_string()));
    }
    let index = (u64::from(a.0) << 40) ^ (u64::from(b.0) << 16) ^ nonce;
    let mut rng = record_rng(spec, seed, "cmp", prompt_id, index);
    let judged_a = judge(spec, a.1, &mut rng);
    let judged_b = judge(spec, b.1, &mut rng);
    let winner = match (judged_a, judged_b) {
        (true, false) => PairWinner::A,
        (false, true) => PairWinner::B,
        _ => {
            if rng.random::<f64>() < 0.5 {
                PairWinner::A
            } else {
                PairWinner::B
            }
        }
    };
    let marker = match winner {
        PairWinner::A => "<A>",
        PairWinner::B => "<B>",
    };
    let raw = format!("Compared both solutions.\nPreferred solution: {marker}");
    let (parsed, ok) = verify::parse_tournament(&raw);
    debug_assert_eq!(parsed, winner);
    Ok((parsed, raw, ok))
}

/// Exact model update: each prompt's distribution becomes the empirical
/// distribution of its kept answers. Prompts with no kept answers keep their
/// old distribution. The correct-answer marker never changes.
pub fn synthetic_update(
    spec: &SyntheticModelSpec,
    kept: &BTreeMap<String, Vec<String>>,
) -> SyntheticModelSpec {
    let mut next = spec.clone();
    for (prompt_id, answers) in kept {
        if answers.is_empty() {
            continue;
        }
        let Some(model) = next.prompts.get_mut(prompt_id) else {
            continue;
        };
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for answer in answers {
            *counts.entry(answer.clone()).or_insert(0) += 1;
        }
        let total = answers.len() as f64;
        model.distribution = counts
            .into_iter()
            .map(|(answer, count)| (answer, count as f64 / total))
            .collect();
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn spec_one_prompt(p_correct: f64, tpr: f64, fpr: f64) -> SyntheticModelSpec {
        let mut distribution = BTreeMap::new();
        distribution.insert("right".to_string(), p_correct);
        distribution.insert("wrong".to_string(), 1.0 - p_correct);
        let mut prompts = BTreeMap::new();
        prompts.insert(
            "p0".to_string(),
            PromptModel {
                distribution,
                correct: "right".to_string(),
            },
        );
        SyntheticModelSpec {
            prompts,
            tpr,
            fpr,
            seed: 11,
        }
    }

    #[test]
    fn validation_checks_distribution_and_confusion() {
        assert!(spec_one_prompt(0.5, 0.9, 0.3).validate().is_ok());
        assert!(matches!(
            spec_one_prompt(0.5, 1.5, 0.3).validate(),
            Err(SynthError::BadConfusion(_))
        ));
        let mut bad = spec_one_prompt(0.5, 0.9, 0.3);
        bad.prompts.get_mut("p0").unwrap().distribution.insert("x".to_string(), 0.4);
        assert!(matches!(
            bad.validate(),
            Err(SynthError::BadDistribution { .. })
        ));
    }

    #[test]
    fn point_mass_generates_only_that_answer() {
        let spec = spec_one_prompt(1.0, 1.0, 0.0);
        let gens = synthetic_generate(&spec, "p0", 32, 3, &SamplingConfig::default()).unwrap();
        assert_eq!(gens.len(), 32);
        assert!(gens.iter().all(|g| g.parsed_answer.as_deref() == Some("right")));
        assert!(gens.iter().all(|g| g.utility == 1.0));
        assert!(gens.iter().all(|g| g.text == "The answer is right."));
    }

    #[test]
    fn half_mass_concentrates_near_half() {
        let spec = spec_one_prompt(0.5, 1.0, 0.0);
        let gens = synthetic_generate(&spec, "p0", 10_000, 5, &SamplingConfig::default()).unwrap();
        let frac = gens.iter().filter(|g| g.utility == 1.0).count() as f64 / 10_000.0;
        assert!((frac - 0.5).abs() < 0.02, "got {frac}");
    }

    #[test]
    fn generation_is_deterministic_and_order_free() {
        let spec = spec_one_prompt(0.3, 0.9, 0.1);
        let a = synthetic_generate(&spec, "p0", 16, 9, &SamplingConfig::default()).unwrap();
        let b = synthetic_generate(&spec, "p0", 16, 9, &SamplingConfig::default()).unwrap();
        assert_eq!(a, b);
        // A prefix run reproduces the same leading records.
        let prefix = synthetic_generate(&spec, "p0", 4, 9, &SamplingConfig::default()).unwrap();
        assert_eq!(&a[..4], &prefix[..]);
        // Different seed, different records.
        let c = synthetic_generate(&spec, "p0", 16, 10, &SamplingConfig::default()).unwrap();
        assert_ne!(a, c);

        assert!(matches!(
            synthetic_generate(&spec, "p0", 0, 9, &SamplingConfig::default()),
            Err(SynthError::ZeroGenerations)
        ));
        assert!(matches!(
            synthetic_generate(&spec, "nope", 4, 9, &SamplingConfig::default()),
            Err(SynthError::UnknownPrompt(_))
        ));
    }

    #[test]
    fn perfect_verifier_reproduces_utility() {
        let spec = spec_one_prompt(0.5, 1.0, 0.0);
        let gens = synthetic_generate(&spec, "p0", 64, 2, &SamplingConfig::default()).unwrap();
        for mech in [Mechanism::Mc, Mechanism::CotBinary, Mechanism::CotScore] {
            for gen in &gens {
                let rec = synthetic_verify(&spec, gen, mech, 2).unwrap();
                assert!(rec.parse_ok);
                rec.validate().unwrap();
                let accepted = match mech {
                    Mechanism::Mc => rec.proxy_utility > 0.5,
                    Mechanism::CotBinary => rec.proxy_utility == 1.0,
                    Mechanism::CotScore => rec.proxy_utility >= 8.0,
                    Mechanism::Tournament => unreachable!(),
                };
                assert_eq!(accepted, gen.utility == 1.0, "mech {mech}");
            }
        }
    }

    #[test]
    fn emissions_go_through_the_real_parsers() {
        let spec = spec_one_prompt(0.5, 0.7, 0.3);
        let gens = synthetic_generate(&spec, "p0", 8, 4, &SamplingConfig::default()).unwrap();
        let rec = synthetic_verify(&spec, &gens[0], Mechanism::CotBinary, 4).unwrap();
        assert!(rec.raw_text.contains("Correctness: <"));
        let rec = synthetic_verify(&spec, &gens[0], Mechanism::CotScore, 4).unwrap();
        assert!(rec.raw_text.contains("Score: "));
        assert!(matches!(
            synthetic_verify(&spec, &gens[0], Mechanism::Tournament, 4),
            Err(SynthError::TournamentIsPairwise)
        ));
    }

    #[test]
    fn symmetric_confusion_is_independent_of_truth() {
        // With a = b the acceptance rate cannot depend on correctness; check
        // the empirical rates are close.
        let spec = spec_one_prompt(0.5, 0.6, 0.6);
        let gens = synthetic_generate(&spec, "p0", 4000, 8, &SamplingConfig::default()).unwrap();
        let mut accept = [0u32; 2];
        let mut total = [0u32; 2];
        for gen in &gens {
            let rec = synthetic_verify(&spec, gen, Mechanism::CotBinary, 8).unwrap();
            let side = usize::from(gen.utility == 1.0);
            total[side] += 1;
            accept[side] += u32::from(rec.proxy_utility == 1.0);
        }
        let rate_wrong = f64::from(accept[0]) / f64::from(total[0]);
        let rate_right = f64::from(accept[1]) / f64::from(total[1]);
        assert!((rate_wrong - rate_right).abs() < 0.06, "{rate_wrong} vs {rate_right}");
    }

    #[test]
    fn compare_prefers_the_judged_correct_side() {
        let spec = spec_one_prompt(0.5, 1.0, 0.0);
        let (w, raw, ok) = synthetic_compare(&spec, "p0", (0, true), (1, false), 0, 3).unwrap();
        assert_eq!(w, PairWinner::A);
        assert!(ok);
        assert!(raw.contains("Preferred solution: <A>"));
        let (w, _, _) = synthetic_compare(&spec, "p0", (0, false), (1, true), 0, 3).unwrap();
        assert_eq!(w, PairWinner::B);
    }

    #[test]
    fn update_projects_to_empirical_distribution() {
        let spec = spec_one_prompt(0.5, 0.9, 0.3);
        let mut kept = BTreeMap::new();
        kept.insert(
            "p0".to_string(),
            vec![
                "right".to_string(),
                "right".to_string(),
                "wrong".to_string(),
                "wrong".to_string(),
            ],
        );
        let next = synthetic_update(&spec, &kept);
        let dist = &next.prompts["p0"].distribution;
        assert_eq!(dist["right"], 0.5);
        assert_eq!(dist["wrong"], 0.5);
        next.validate().unwrap();

        // All-correct kept set collapses to a point mass.
        kept.insert("p0".to_string(), vec!["right".to_string(); 3]);
        let next = synthetic_update(&spec, &kept);
        assert_eq!(next.prompts["p0"].distribution["right"], 1.0);
        assert_eq!(next.prompts["p0"].distribution.len(), 1);
        assert_eq!(next.correct_mass("p0"), Some(1.0));

        // Empty kept set leaves the prompt untouched.
        kept.insert("p0".to_string(), Vec::new());
        let unchanged = synthetic_update(&spec, &kept);
        assert_eq!(unchanged.prompts["p0"], spec.prompts["p0"]);
    }

    #[test]
    fn update_support_is_subset_of_kept() {
        let spec = spec_one_prompt(0.5, 0.9, 0.3);
        let mut kept = BTreeMap::new();
        kept.insert("p0".to_string(), vec!["right".to_string()]);
        let next = synthetic_update(&spec, &kept);
        let support: Vec<&String> = next.prompts["p0"].distribution.keys().collect();
        assert_eq!(support, vec!["right"]);
        let total: f64 = next.prompts["p0"].distribution.values().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
