//! Prompt datasets: JSONL loaders and desk-scale dataset generators.

use std::collections::BTreeMap;
use std::path::Path;

use gaplab_core::sudoku::{generate_many, SudokuGrid};
use gaplab_core::synth::{PromptModel, SyntheticModelSpec};
use gaplab_core::types::{Exemplar, Gold, PromptInstance};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::Deserialize;

use crate::config::TaskKind;
use crate::error::{Error, Result};

/// One JSONL dataset row. `gold` holds a single answer (`answer` is an
/// accepted alias); trivia rows use `candidates` instead.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PromptRow {
    id: serde_json::Value,
    question: String,
    #[serde(default, alias = "answer")]
    gold: Option<String>,
    #[serde(default)]
    candidates: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExemplarRow {
    question: String,
    answer: String,
}

fn row_id(value: &serde_json::Value) -> Result<String> {
    match value {
        serde_json::Value::String(s) if !s.is_empty() => Ok(s.clone()),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        other => Err(Error::data(format!("bad prompt id: {other}"))),
    }
}

/// Loads prompts from a JSONL file, interpreting the gold payload per task
/// family. Duplicate ids are rejected.
pub fn load_prompts(path: &Path, kind: TaskKind) -> Result<Vec<PromptInstance>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::data(format!("read {}: {e}", path.display())))?;
    let mut prompts = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = |msg: String| Error::data(format!("{}:{}: {msg}", path.display(), lineno + 1));
        let row: PromptRow =
            serde_json::from_str(line).map_err(|e| at(format!("bad row: {e}")))?;
        let prompt_id = row_id(&row.id).map_err(|e| at(e.to_string()))?;
        if !seen.insert(prompt_id.clone()) {
            return Err(at(format!("duplicate prompt id {prompt_id}")));
        }
        let gold = match kind {
            TaskKind::Math | TaskKind::Synthetic => Gold::Answer(
                row.gold
                    .ok_or_else(|| at(String::from("missing gold answer")))?,
            ),
            TaskKind::Trivia => Gold::Candidates(
                row.candidates
                    .ok_or_else(|| at(String::from("missing candidates")))?,
            ),
            TaskKind::Sudoku => {
                let text = row
                    .gold
                    .ok_or_else(|| at(String::from("missing gold solution grid")))?;
                let grid = SudokuGrid::parse(&text)
                    .map_err(|e| at(format!("bad solution grid: {e}")))?;
                Gold::SudokuSolution(grid)
            }
        };
        let prompt = PromptInstance {
            prompt_id,
            question: row.question,
            gold,
        };
        prompt.validate().map_err(|e| at(e.to_string()))?;
        prompts.push(prompt);
    }
    if prompts.is_empty() {
        return Err(Error::data(format!("{}: no prompts", path.display())));
    }
    Ok(prompts)
}

/// Loads few-shot exemplars from a JSONL file of question/answer rows.
pub fn load_exemplars(path: &Path) -> Result<Vec<Exemplar>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::data(format!("read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: ExemplarRow = serde_json::from_str(line).map_err(|e| {
            Error::data(format!("{}:{}: bad exemplar: {e}", path.display(), lineno + 1))
        })?;
        out.push(Exemplar {
            question: row.question,
            answer: row.answer,
        });
    }
    Ok(out)
}

/// Generates `count` unique-solution sudoku prompts. The puzzle text is the
/// question; the completed grid is the gold solution.
pub fn sudoku_prompts(count: usize, seed: u64) -> Vec<PromptInstance> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    generate_many(&mut rng, count)
        .into_iter()
        .enumerate()
        .map(|(i, (puzzle, solution))| PromptInstance {
            prompt_id: format!("sudoku-{i:04}"),
            question: puzzle.render(),
            gold: Gold::SudokuSolution(solution),
        })
        .collect()
}

/// Builds a synthetic model where every prompt puts `p_correct` mass on its
/// correct answer and splits the rest over `distractors` wrong answers,
/// together with the matching prompt list.
pub fn synthetic_dataset(
    n_prompts: usize,
    p_correct: f64,
    distractors: usize,
    tpr: f64,
    fpr: f64,
    seed: u64,
) -> Result<(Vec<PromptInstance>, SyntheticModelSpec)> {
    if n_prompts == 0 {
        return Err(Error::config("synthetic dataset needs at least one prompt"));
    }
    if !(0.0..=1.0).contains(&p_correct) {
        return Err(Error::config(format!(
            "p_correct {p_correct} must lie in [0, 1]"
        )));
    }
    if distractors == 0 {
        return Err(Error::config("synthetic dataset needs at least one distractor"));
    }
    let mut prompts = Vec::with_capacity(n_prompts);
    let mut models = BTreeMap::new();
    for i in 0..n_prompts {
        let prompt_id = format!("p{i:05}");
        let correct = format!("{}", 1000 + i);
        let mut distribution = BTreeMap::new();
        if p_correct > 0.0 {
            distribution.insert(correct.clone(), p_correct);
        }
        let wrong_mass = (1.0 - p_correct) / distractors as f64;
        if wrong_mass > 0.0 {
            for d in 0..distractors {
                distribution.insert(format!("wrong-{d}-{}", 1000 + i), wrong_mass);
            }
        }
        models.insert(
            prompt_id.clone(),
            PromptModel {
                distribution,
                correct: correct.clone(),
            },
        );
        prompts.push(PromptInstance {
            prompt_id,
            question: format!("What is the value of item {i}?"),
            gold: Gold::Answer(correct),
        });
    }
    let spec = SyntheticModelSpec {
        prompts: models,
        tpr,
        fpr,
        seed,
    };
    spec.validate()?;
    Ok((prompts, spec))
}

/// Serializes prompts back to the JSONL dataset format.
pub fn prompts_to_jsonl(prompts: &[PromptInstance]) -> String {
    let mut out = String::new();
    for p in prompts {
        let row = match &p.gold {
            Gold::Answer(a) => serde_json::json!({
                "id": p.prompt_id,
                "question": p.question,
                "gold": a,
            }),
            Gold::Candidates(c) => serde_json::json!({
                "id": p.prompt_id,
                "question": p.question,
                "candidates": c,
            }),
            Gold::SudokuSolution(g) => serde_json::json!({
                "id": p.prompt_id,
                "question": p.question,
                "gold": g.render(),
            }),
        };
        out.push_str(&row.to_string());
        out.push('\n');
    }
    out
}
