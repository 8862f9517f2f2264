//! Orchestration over run stores: generation, verification, gap reports,
//! cross-verification, filtered export, and iterative self-improvement.
//!
//! Backend calls fan out per prompt under the in-flight cap; results are
//! committed in (prompt_id, gen_index) order so record files are
//! deterministic for a given config and seed.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use gaplab_core::gapmath::{pass_at_k, GapReport, PromptGapTerm};
use gaplab_core::tasks::score_generation;
use gaplab_core::types::{
    Generation, MatchMode, Mechanism, PromptInstance, SamplingConfig, TaskSpec,
    VerificationRecord, WeightFunction,
};
use gaplab_core::verify::{run_tournament_batched, PairWinner};
use gaplab_core::weights::evaluate_weights;
use serde::{Deserialize, Serialize};

use crate::backend::{mix_seed, ModelHandle, SyntheticModel};
use crate::config::{Config, VerifyConfig};
use crate::error::{Error, Result};
use crate::parallel::bounded_map;
use crate::store::{
    ExportRecord, PromptBracket, RunManifest, RunStore, TournamentSummary, SCHEMA_VERSION,
};

/// Work committed between store appends; bounds how much is redone after an
/// interrupt.
const COMMIT_CHUNK: usize = 64;

/// Builds a fresh manifest from the configuration.
pub fn new_manifest(
    cfg: &Config,
    run_id: String,
    generator_model: String,
    verifier_model: String,
    parent_run: Option<String>,
) -> RunManifest {
    let sampling = cfg.sampling.resolved();
    RunManifest {
        v: SCHEMA_VERSION,
        run_id,
        task_name: cfg.task.name.clone(),
        split: cfg.task.split.clone(),
        task_kind: cfg.task.kind,
        generator_model,
        verifier_model,
        sampling,
        mechanism: cfg.verify.mechanism,
        weight: cfg.weight,
        match_mode: cfg.task.match_mode,
        seed: sampling.seed,
        created_at: chrono::Utc::now().to_rfc3339(),
        parent_run,
    }
}

/// Writes the manifest on first use; on resume, checks that the directory
/// belongs to the same experiment.
pub fn ensure_manifest(store: &RunStore, manifest: &RunManifest) -> Result<RunManifest> {
    if !store.has_manifest() {
        store.write_manifest(manifest)?;
        return Ok(manifest.clone());
    }
    let existing = store.read_manifest()?;
    if existing.task_name != manifest.task_name
        || existing.seed != manifest.seed
        || existing.generator_model != manifest.generator_model
        || existing.sampling.n_generations != manifest.sampling.n_generations
    {
        return Err(Error::data(format!(
            "run directory {} belongs to a different experiment (task {}, generator {}, seed {})",
            store.dir().display(),
            existing.task_name,
            existing.generator_model,
            existing.seed,
        )));
    }
    Ok(existing)
}

#[derive(Debug, Clone, Serialize)]
pub struct GenStats {
    pub prompts: usize,
    pub new_records: usize,
    pub skipped_records: usize,
    /// Mean utility over all persisted generations (the base accuracy).
    pub mean_utility: f64,
}

/// Samples and persists generations for every prompt, skipping records that
/// already exist. Backend failures leave completed prompts committed; the
/// rerun picks up where this one stopped.
pub fn run_generation(
    store: &RunStore,
    model: &ModelHandle,
    task: &TaskSpec,
    prompts: &[PromptInstance],
    sampling: &SamplingConfig,
    max_inflight: usize,
) -> Result<GenStats> {
    if prompts.is_empty() {
        return Err(Error::data("prompt list is empty"));
    }
    let n = sampling.n_generations;
    let existing = store.generation_keys()?;
    let mut skipped_records = 0usize;
    let mut pending: Vec<&PromptInstance> = Vec::new();
    for p in prompts {
        let have = existing.get(&p.prompt_id).map_or(0, |set| {
            set.iter().filter(|&&i| i < n).count()
        });
        skipped_records += have;
        if have < n as usize {
            pending.push(p);
        }
    }

    let mut new_records = 0usize;
    let mut utility_sum = 0.0f64;
    let mut utility_n = 0usize;
    for chunk in pending.chunks(COMMIT_CHUNK.max(max_inflight)) {
        let results = bounded_map(chunk, max_inflight, |_, p| model.generate(task, p, sampling));
        for (p, result) in chunk.iter().zip(results) {
            let gens = result?;
            let have = existing.get(&p.prompt_id);
            let fresh: Vec<Generation> = gens
                .into_iter()
                .filter(|g| have.is_none_or(|set| !set.contains(&g.gen_index)))
                .collect();
            for g in &fresh {
                g.validate(task)
                    .map_err(|e| Error::data(format!("generated record invalid: {e}")))?;
            }
            store.append_generations(&fresh)?;
            new_records += fresh.len();
        }
    }

    // Base accuracy over everything now in the store for these prompts.
    let ids: BTreeSet<&str> = prompts.iter().map(|p| p.prompt_id.as_str()).collect();
    for g in store.load_generations()? {
        if ids.contains(g.prompt_id.as_str()) && g.gen_index < n {
            utility_sum += g.utility;
            utility_n += 1;
        }
    }
    Ok(GenStats {
        prompts: prompts.len(),
        new_records,
        skipped_records,
        mean_utility: if utility_n == 0 {
            0.0
        } else {
            utility_sum / utility_n as f64
        },
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyStats {
    pub mechanism: Mechanism,
    pub new_records: usize,
    pub skipped_records: usize,
    /// Records whose judgment text failed to parse (defaulted scores).
    pub parse_flagged: usize,
    pub total_records: usize,
}

impl VerifyStats {
    pub fn flagged_fraction(&self) -> f64 {
        if self.total_records == 0 {
            0.0
        } else {
            self.parse_flagged as f64 / self.total_records as f64
        }
    }
}

fn prompt_index(prompts: &[PromptInstance]) -> BTreeMap<&str, &PromptInstance> {
    prompts.iter().map(|p| (p.prompt_id.as_str(), p)).collect()
}

/// Scores every stored generation with the configured mechanism. Pointwise
/// mechanisms draw `samples_per_generation` records per generation;
/// tournaments run one bracket per prompt and persist the bracket summary.
pub fn run_verification(
    store: &RunStore,
    model: &ModelHandle,
    task: &TaskSpec,
    prompts: &[PromptInstance],
    verify_cfg: &VerifyConfig,
    bracket_seed: u64,
    max_inflight: usize,
) -> Result<VerifyStats> {
    let by_prompt = store.generations_by_prompt()?;
    if by_prompt.is_empty() {
        return Err(Error::data("no generations in the run store; run gen first"));
    }
    let index = prompt_index(prompts);
    for pid in by_prompt.keys() {
        if !index.contains_key(pid.as_str()) {
            return Err(Error::data(format!(
                "stored generations reference prompt {pid} missing from the dataset"
            )));
        }
    }
    if verify_cfg.mechanism == Mechanism::Tournament {
        verify_tournament(store, model, task, &by_prompt, &index, verify_cfg, bracket_seed, max_inflight)
    } else {
        verify_pointwise(store, model, task, &by_prompt, &index, verify_cfg, max_inflight)
    }
}

fn verify_pointwise(
    store: &RunStore,
    model: &ModelHandle,
    task: &TaskSpec,
    by_prompt: &BTreeMap<String, Vec<Generation>>,
    index: &BTreeMap<&str, &PromptInstance>,
    verify_cfg: &VerifyConfig,
    max_inflight: usize,
) -> Result<VerifyStats> {
    let mechanism = verify_cfg.mechanism;
    let samples = verify_cfg.samples_per_generation;
    let counts = store.verification_counts(mechanism)?;

    struct Item<'a> {
        prompt: &'a PromptInstance,
        gen: &'a Generation,
        from: u32,
    }
    let mut items: Vec<Item<'_>> = Vec::new();
    let mut skipped_records = 0usize;
    for (pid, gens) in by_prompt {
        let prompt = index[pid.as_str()];
        for g in gens {
            let have = counts
                .get(&(pid.clone(), g.gen_index))
                .copied()
                .unwrap_or(0)
                .min(samples);
            skipped_records += have as usize;
            if have < samples {
                items.push(Item {
                    prompt,
                    gen: g,
                    from: have,
                });
            }
        }
    }

    let mut new_records = 0usize;
    let mut parse_flagged = 0usize;
    for chunk in items.chunks(COMMIT_CHUNK.max(max_inflight)) {
        let results = bounded_map(chunk, max_inflight, |_, item| -> Result<Vec<VerificationRecord>> {
            (item.from..samples)
                .map(|s| model.verify(task, item.prompt, item.gen, mechanism, verify_cfg, s))
                .collect()
        });
        let mut batch: Vec<VerificationRecord> = Vec::new();
        for result in results {
            batch.extend(result?);
        }
        for record in &batch {
            record
                .validate()
                .map_err(|e| Error::data(format!("verification record invalid: {e}")))?;
            if !record.parse_ok {
                parse_flagged += 1;
            }
        }
        store.append_verifications(mechanism, &batch)?;
        new_records += batch.len();
    }
    Ok(VerifyStats {
        mechanism,
        new_records,
        skipped_records,
        parse_flagged,
        total_records: new_records + skipped_records,
    })
}

#[allow(clippy::too_many_arguments)]
fn verify_tournament(
    store: &RunStore,
    model: &ModelHandle,
    task: &TaskSpec,
    by_prompt: &BTreeMap<String, Vec<Generation>>,
    index: &BTreeMap<&str, &PromptInstance>,
    verify_cfg: &VerifyConfig,
    bracket_seed: u64,
    max_inflight: usize,
) -> Result<VerifyStats> {
    let rounds = verify_cfg.tournament_rounds;
    let counts = store.verification_counts(Mechanism::Tournament)?;
    let mut summary = if store.tournament_path().is_file() {
        let existing = store.read_tournament_summary()?;
        if existing.bracket_rounds != rounds {
            return Err(Error::data(format!(
                "run already holds a {}-round tournament; asked for {rounds}",
                existing.bracket_rounds
            )));
        }
        existing
    } else {
        TournamentSummary {
            v: SCHEMA_VERSION,
            bracket_rounds: rounds,
            per_prompt: BTreeMap::new(),
        }
    };

    let mut new_records = 0usize;
    let mut skipped_records = 0usize;
    let mut flagged = 0usize;
    for (pid, gens) in by_prompt {
        if summary.per_prompt.contains_key(pid) {
            skipped_records += gens.len();
            continue;
        }
        let prompt = index[pid.as_str()];
        let indices: Vec<u32> = gens.iter().map(|g| g.gen_index).collect();
        let by_index: BTreeMap<u32, &Generation> =
            gens.iter().map(|g| (g.gen_index, g)).collect();
        let seed = mix_seed(bracket_seed, &["bracket", pid]);

        // The bracket runner flags judgment-parse failures itself; hard
        // backend errors abort the whole prompt instead of being flagged.
        let mut hard_error: Option<Error> = None;
        let mut round_no = 0u64;
        let result = run_tournament_batched(&indices, rounds, seed, |pairs| {
            let nonce = round_no;
            round_no += 1;
            let outcomes = bounded_map(pairs, max_inflight, |_, &(a, b)| {
                model.compare(task, prompt, by_index[&a], by_index[&b], nonce)
            });
            outcomes
                .into_iter()
                .map(|res| match res {
                    Ok((winner, _raw, ok)) => Ok((winner, ok)),
                    Err(e) => {
                        if hard_error.is_none() {
                            hard_error = Some(e);
                        }
                        Ok((PairWinner::A, false))
                    }
                })
                .collect::<Vec<std::result::Result<(PairWinner, bool), Error>>>()
        })?;
        if let Some(e) = hard_error {
            return Err(e);
        }

        let entrants: BTreeSet<u32> = result.rounds[0].iter().copied().collect();
        let mut batch: Vec<VerificationRecord> = Vec::new();
        for g in gens {
            if counts.contains_key(&(pid.clone(), g.gen_index)) {
                skipped_records += 1;
                continue;
            }
            let survived = result.rounds_survived(g.gen_index);
            let raw_text = if entrants.contains(&g.gen_index) {
                format!("survived {survived} of {rounds} rounds")
            } else {
                String::from("not seeded into bracket")
            };
            batch.push(VerificationRecord {
                prompt_id: pid.clone(),
                gen_index: g.gen_index,
                mechanism: Mechanism::Tournament,
                raw_text,
                proxy_utility: f64::from(survived),
                parse_ok: true,
            });
        }
        store.append_verifications(Mechanism::Tournament, &batch)?;
        new_records += batch.len();
        flagged += result.flagged_comparisons;
        summary
            .per_prompt
            .insert(pid.clone(), PromptBracket::from(&result));
    }
    store.write_tournament_summary(&summary)?;
    Ok(VerifyStats {
        mechanism: Mechanism::Tournament,
        new_records,
        skipped_records,
        parse_flagged: flagged,
        total_records: new_records + skipped_records,
    })
}

/// Generations joined with their mean proxy score, per prompt.
pub struct Joined {
    /// prompt id -> (generations sorted by index, aligned mean scores).
    pub by_prompt: BTreeMap<String, (Vec<Generation>, Vec<f64>)>,
}

/// Joins stored generations with verification records, averaging repeated
/// verifier samples per generation. Every generation must be covered.
pub fn join_run(store: &RunStore, mechanism: Mechanism) -> Result<Joined> {
    let gens = store.generations_by_prompt()?;
    if gens.is_empty() {
        return Err(Error::data("no generations in the run store"));
    }
    let records = store.load_verifications(mechanism)?;
    if records.is_empty() {
        return Err(Error::data(format!(
            "no {} verification records; run verify first",
            mechanism.as_str()
        )));
    }
    let mut sums: BTreeMap<(String, u32), (f64, u32)> = BTreeMap::new();
    for r in records {
        let entry = sums.entry((r.prompt_id, r.gen_index)).or_insert((0.0, 0));
        entry.0 += r.proxy_utility;
        entry.1 += 1;
    }
    let mut by_prompt = BTreeMap::new();
    for (pid, glist) in gens {
        let mut scores = Vec::with_capacity(glist.len());
        for g in &glist {
            let (sum, count) = sums
                .get(&(pid.clone(), g.gen_index))
                .copied()
                .ok_or_else(|| {
                    Error::data(format!(
                        "missing {} verification for prompt {pid} generation {}",
                        mechanism.as_str(),
                        g.gen_index
                    ))
                })?;
            scores.push(sum / f64::from(count));
        }
        by_prompt.insert(pid, (glist, scores));
    }
    Ok(Joined { by_prompt })
}

/// A gap report with its run context, as written to `report.*.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReportFile {
    pub v: u32,
    pub run_id: String,
    pub task_name: String,
    pub generator_model: String,
    pub verifier_model: String,
    pub mechanism: Mechanism,
    pub weight: WeightFunction,
    pub match_mode: MatchMode,
    pub n_prompts: usize,
    pub n_generations: usize,
    /// Mean base utility over prompts.
    pub base_accuracy: f64,
    /// Mean reweighted utility over prompts.
    pub filtered_accuracy: f64,
    pub gap: f64,
    pub relative_gap: f64,
    pub n_fallback: usize,
    pub n_excluded_rel: usize,
    pub per_prompt: Vec<PromptGapTerm>,
}

/// Turns joined records into per-prompt gap terms under one weight function.
pub fn gap_terms(joined: &Joined, weight: &WeightFunction) -> Result<Vec<PromptGapTerm>> {
    let mut terms = Vec::with_capacity(joined.by_prompt.len());
    for (pid, (gens, scores)) in &joined.by_prompt {
        let utilities: Vec<f64> = gens.iter().map(|g| g.utility).collect();
        let weights = evaluate_weights(weight, scores)?;
        let base = utilities.iter().sum::<f64>() / utilities.len() as f64;
        let (reweighted, fallback) =
            gaplab_core::gapmath::reweighted_utility(&utilities, &weights)?;
        terms.push(PromptGapTerm {
            prompt_id: pid.clone(),
            base_utility: base,
            reweighted_utility: reweighted,
            fallback,
        });
    }
    Ok(terms)
}

/// Computes the gap report for one mechanism and weight function.
///
/// `reparse` rescores utilities from the stored generation text under a
/// different match mode before aggregating (the raw text is the source of
/// truth; stored utilities are a cache of one parse).
pub fn compute_gap_report(
    store: &RunStore,
    manifest: &RunManifest,
    task: &TaskSpec,
    mechanism: Mechanism,
    weight: WeightFunction,
    reparse: Option<(&[PromptInstance], MatchMode)>,
) -> Result<GapReportFile> {
    weight.validate()?;
    let mut joined = join_run(store, mechanism)?;
    let mut match_mode = manifest.match_mode;
    if let Some((prompts, mode)) = reparse {
        match_mode = mode;
        let mut retask = task.clone();
        retask.match_mode = mode;
        let index = prompt_index(prompts);
        for (pid, (gens, _)) in joined.by_prompt.iter_mut() {
            let prompt = index.get(pid.as_str()).ok_or_else(|| {
                Error::data(format!("prompt {pid} missing from dataset for re-parse"))
            })?;
            for g in gens.iter_mut() {
                let scored = score_generation(&retask, prompt, &g.text)?;
                g.utility = scored.utility;
                g.parsed_answer = scored.parsed_answer;
            }
        }
    }
    let terms = gap_terms(&joined, &weight)?;
    let n_generations = joined.by_prompt.values().map(|(g, _)| g.len()).sum();
    let report = GapReport::from_terms(terms, task.u_max)?;
    let n = report.per_prompt.len();
    let base_accuracy = report.per_prompt.iter().map(|t| t.base_utility).sum::<f64>() / n as f64;
    let filtered_accuracy =
        report.per_prompt.iter().map(|t| t.reweighted_utility).sum::<f64>() / n as f64;
    Ok(GapReportFile {
        v: SCHEMA_VERSION,
        run_id: manifest.run_id.clone(),
        task_name: manifest.task_name.clone(),
        generator_model: manifest.generator_model.clone(),
        verifier_model: manifest.verifier_model.clone(),
        mechanism,
        weight,
        match_mode,
        n_prompts: n,
        n_generations,
        base_accuracy,
        filtered_accuracy,
        gap: report.gap,
        relative_gap: report.relative_gap,
        n_fallback: report.n_fallback,
        n_excluded_rel: report.n_excluded_rel,
        per_prompt: report.per_prompt,
    })
}

/// Copies a finished generation run into `target` and verifies it with a
/// different verifier model, producing the (generator, verifier) report.
#[allow(clippy::too_many_arguments)]
pub fn cross_verify(
    source_dir: &Path,
    target: &RunStore,
    verifier: &ModelHandle,
    task: &TaskSpec,
    prompts: &[PromptInstance],
    verify_cfg: &VerifyConfig,
    weight: WeightFunction,
    run_id: String,
    max_inflight: usize,
) -> Result<GapReportFile> {
    let source = RunStore::open_read(source_dir)?;
    let source_manifest = source.read_manifest()?;
    let manifest = if target.has_manifest() {
        target.read_manifest()?
    } else {
        let mut m = source_manifest.clone();
        m.run_id = run_id;
        m.verifier_model = verifier.model_id().to_string();
        m.mechanism = verify_cfg.mechanism;
        m.parent_run = Some(source_manifest.run_id.clone());
        m.created_at = chrono::Utc::now().to_rfc3339();
        target.write_manifest(&m)?;
        m
    };
    if target.generation_keys()?.is_empty() {
        let gens = source.load_generations()?;
        if gens.is_empty() {
            return Err(Error::data(format!(
                "source run {} has no generations",
                source_dir.display()
            )));
        }
        target.append_generations(&gens)?;
    }
    run_verification(target, verifier, task, prompts, verify_cfg, manifest.seed, max_inflight)?;
    compute_gap_report(target, &manifest, task, verify_cfg.mechanism, weight, None)
}

#[derive(Debug, Clone, Serialize)]
pub struct ExportStats {
    pub records: usize,
    /// True when the filter kept nothing; the file is still written.
    pub empty: bool,
}

/// Writes the filtered training set: positive-weight generations for
/// indicator weights, or every generation with its importance weight for
/// exponential weights. Ordering is (prompt_id, gen_index).
pub fn export_filtered(
    store: &RunStore,
    task: &TaskSpec,
    prompts: &[PromptInstance],
    mechanism: Mechanism,
    weight: WeightFunction,
) -> Result<ExportStats> {
    weight.validate()?;
    let joined = join_run(store, mechanism)?;
    let index = prompt_index(prompts);
    let importance = matches!(weight, WeightFunction::Exponential { .. });
    let mut out: Vec<ExportRecord> = Vec::new();
    for (pid, (gens, scores)) in &joined.by_prompt {
        let prompt = index.get(pid.as_str()).ok_or_else(|| {
            Error::data(format!("prompt {pid} missing from dataset for export"))
        })?;
        let weights = evaluate_weights(&weight, scores)?;
        // Training examples are zero-shot: the bare template around the
        // question, paired with the sampled completion.
        let rendered = task.gen_template.replace("{problem}", &prompt.question);
        for (g, &w) in gens.iter().zip(&weights) {
            if importance {
                out.push(ExportRecord {
                    prompt: rendered.clone(),
                    completion: g.text.clone(),
                    weight: Some(w),
                });
            } else if w > 0.0 {
                out.push(ExportRecord {
                    prompt: rendered.clone(),
                    completion: g.text.clone(),
                    weight: None,
                });
            }
        }
    }
    store.write_export(&out)?;
    Ok(ExportStats {
        records: out.len(),
        empty: out.is_empty(),
    })
}

/// Positive-weight parsed answers per prompt; the kept set a synthetic
/// model update trains on.
pub fn kept_answers(
    joined: &Joined,
    weight: &WeightFunction,
) -> Result<BTreeMap<String, Vec<String>>> {
    let mut kept: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (pid, (gens, scores)) in &joined.by_prompt {
        let weights = evaluate_weights(weight, scores)?;
        let answers: Vec<String> = gens
            .iter()
            .zip(&weights)
            .filter(|&(g, &w)| w > 0.0 && g.parsed_answer.is_some())
            .map(|(g, _)| g.parsed_answer.clone().expect("filtered to Some"))
            .collect();
        kept.insert(pid.clone(), answers);
    }
    Ok(kept)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: u32,
    pub run_dir: String,
    /// Mean base utility (equals pass@1 for binary utilities).
    pub accuracy: f64,
    pub gap: f64,
    pub relative_gap: f64,
    pub n_fallback: usize,
    pub pass_at: BTreeMap<u64, f64>,
    pub exported_records: usize,
    /// True expected accuracy of this round's model (synthetic backends).
    pub model_expected_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterateOutcome {
    pub v: u32,
    pub rounds: Vec<RoundMetrics>,
    /// The gap fell below the configured floor before all rounds ran.
    pub halted_early: bool,
    /// Paused awaiting external training of the next-round model.
    pub awaiting_external: bool,
}

/// Mean pass@k over prompts; a generation counts as correct when its utility
/// reaches the task ceiling.
pub fn mean_pass_at_k(
    by_prompt: &BTreeMap<String, (Vec<Generation>, Vec<f64>)>,
    u_max: f64,
    k: u64,
) -> Result<f64> {
    let mut sum = 0.0;
    for (gens, _) in by_prompt.values() {
        let n = gens.len() as u64;
        let c = gens.iter().filter(|g| g.utility == u_max).count() as u64;
        sum += pass_at_k(n, c, k)?;
    }
    Ok(sum / by_prompt.len() as f64)
}

/// Runs the self-improvement loop: generate, verify, report, export, update.
///
/// Synthetic backends update in place (the next round's model is the kept-
/// answer distribution). HTTP backends cannot be retrained here, so after
/// the first export the loop records a resumable state file and stops with
/// `awaiting_external` set.
#[allow(clippy::too_many_arguments)]
pub fn iterate(
    base_dir: &Path,
    cfg: &Config,
    task: &TaskSpec,
    prompts: &[PromptInstance],
    mut model: ModelHandle,
    run_id_prefix: &str,
    max_inflight: usize,
) -> Result<IterateOutcome> {
    let total_rounds = cfg.iterate.rounds;
    let floor = cfg.iterate.gap_floor;
    let weight = cfg.weight_for(cfg.verify.mechanism);
    let base_sampling = cfg.sampling.resolved();
    let prompt_ids: Vec<String> = prompts.iter().map(|p| p.prompt_id.clone()).collect();

    let metrics_path = base_dir.join("iterate_metrics.json");
    let mut outcome: IterateOutcome = if metrics_path.is_file() {
        let text = std::fs::read_to_string(&metrics_path)?;
        let mut prior: IterateOutcome = serde_json::from_str(&text)
            .map_err(|e| Error::data(format!("{}: {e}", metrics_path.display())))?;
        prior.awaiting_external = false;
        prior.halted_early = prior.rounds.iter().any(|r| r.gap < floor);
        prior
    } else {
        IterateOutcome {
            v: SCHEMA_VERSION,
            rounds: Vec::new(),
            halted_early: false,
            awaiting_external: false,
        }
    };
    // Resume after the last recorded round; a chain that already reached the
    // floor runs nothing further.
    let start = if outcome.halted_early {
        total_rounds.saturating_add(1)
    } else {
        outcome.rounds.last().map_or(1, |r| r.round + 1)
    };
    // Synthetic chains rebuild the round-`start` model by replaying updates
    // over the recorded rounds; externally trained chains get theirs from
    // the config instead.
    if matches!(model, ModelHandle::Synthetic(_)) && start <= total_rounds {
        for r in &outcome.rounds {
            let store = RunStore::open_read(&base_dir.join(format!("round-{}", r.round)))?;
            let joined = join_run(&store, cfg.verify.mechanism)?;
            if let ModelHandle::Synthetic(m) = &model {
                let kept = kept_answers(&joined, &weight)?;
                let next_seed = base_sampling.seed.wrapping_add(u64::from(r.round) + 1);
                let next_id = format!("{}-r{}", cfg.backend.model, r.round + 1);
                model =
                    ModelHandle::Synthetic(SyntheticModel::new(m.updated(&kept), next_id, next_seed)?);
            }
        }
    }
    let mut parent: Option<String> = outcome
        .rounds
        .last()
        .map(|r| format!("{run_id_prefix}-round-{}", r.round));
    for t in start..=total_rounds {
        let round_dir = base_dir.join(format!("round-{t}"));
        let store = RunStore::open(&round_dir)?;
        let mut sampling = base_sampling;
        // Decorrelate rounds: same spec seeds would replay round t's draws.
        sampling.seed = base_sampling.seed.wrapping_add(u64::from(t));
        let run_id = format!("{run_id_prefix}-round-{t}");
        let mut manifest = new_manifest(
            cfg,
            run_id.clone(),
            model.model_id().to_string(),
            model.model_id().to_string(),
            parent.clone(),
        );
        manifest.sampling = sampling;
        manifest.seed = sampling.seed;
        let manifest = ensure_manifest(&store, &manifest)?;

        if let ModelHandle::Synthetic(m) = &model {
            let spec_json = serde_json::to_string_pretty(&m.spec)?;
            std::fs::write(round_dir.join("model.json"), spec_json)?;
        }

        run_generation(&store, &model, task, prompts, &sampling, max_inflight)?;
        run_verification(
            &store,
            &model,
            task,
            prompts,
            &cfg.verify,
            manifest.seed,
            max_inflight,
        )?;
        let report = compute_gap_report(&store, &manifest, task, cfg.verify.mechanism, weight, None)?;
        store.write_report(cfg.verify.mechanism, &weight, &report)?;
        let export = export_filtered(&store, task, prompts, cfg.verify.mechanism, weight)?;

        let joined = join_run(&store, cfg.verify.mechanism)?;
        let mut pass_at = BTreeMap::new();
        for &k in &cfg.iterate.pass_k {
            if k > u64::from(sampling.n_generations) {
                return Err(Error::config(format!(
                    "iterate.pass_k value {k} exceeds n_generations {}",
                    sampling.n_generations
                )));
            }
            pass_at.insert(k, mean_pass_at_k(&joined.by_prompt, task.u_max, k)?);
        }
        let expected = match &model {
            ModelHandle::Synthetic(m) => m.expected_accuracy(&prompt_ids),
            ModelHandle::Http(_) => None,
        };
        outcome.rounds.push(RoundMetrics {
            round: t,
            run_dir: round_dir.display().to_string(),
            accuracy: report.base_accuracy,
            gap: report.gap,
            relative_gap: report.relative_gap,
            n_fallback: report.n_fallback,
            pass_at,
            exported_records: export.records,
            model_expected_accuracy: expected,
        });
        parent = Some(run_id);

        if report.gap < floor {
            outcome.halted_early = true;
            break;
        }
        if t == total_rounds {
            break;
        }
        match &model {
            ModelHandle::Synthetic(m) => {
                let kept = kept_answers(&joined, &weight)?;
                let next_spec = m.updated(&kept);
                let next_seed = base_sampling.seed.wrapping_add(u64::from(t) + 1);
                let next_id = format!("{}-r{}", cfg.backend.model, t + 1);
                model = ModelHandle::Synthetic(SyntheticModel::new(next_spec, next_id, next_seed)?);
            }
            ModelHandle::Http(_) => {
                outcome.awaiting_external = true;
                break;
            }
        }
    }
    let metrics_json = serde_json::to_string_pretty(&outcome)?;
    std::fs::write(&metrics_path, format!("{metrics_json}\n"))?;
    Ok(outcome)
}

/// Outcome of an in-memory closed-form comparison run.
#[derive(Debug, Clone, Serialize)]
pub struct SimulateOutcome {
    pub n_prompts: usize,
    pub n_generations: u32,
    pub base_accuracy: f64,
    pub filtered_accuracy: f64,
    pub gap: f64,
    pub relative_gap: f64,
    pub n_fallback: usize,
    /// pa / (pa + (1−p)b): filtered accuracy under keep-if-verified.
    pub closed_form_accuracy: f64,
    pub closed_form_gap: f64,
}

/// Runs generation and verification in memory against a uniform synthetic
/// model and compares the measured gap with the keep-if-verified closed
/// form. No run directory is touched.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    p_correct: f64,
    tpr: f64,
    fpr: f64,
    n_prompts: usize,
    n_generations: u32,
    mechanism: Mechanism,
    weight: WeightFunction,
    seed: u64,
) -> Result<SimulateOutcome> {
    if mechanism == Mechanism::Tournament {
        return Err(Error::config("simulate covers pointwise mechanisms only"));
    }
    let (prompts, spec) = crate::dataset::synthetic_dataset(n_prompts, p_correct, 1, tpr, fpr, seed)?;
    let model = SyntheticModel::new(spec, String::from("synthetic-sim"), seed)?;
    let sampling = SamplingConfig {
        n_generations,
        seed,
        ..SamplingConfig::default()
    };
    sampling.validate()?;
    let verify_cfg = VerifyConfig {
        mechanism,
        ..VerifyConfig::default()
    };
    let mut by_prompt = BTreeMap::new();
    for prompt in &prompts {
        let gens = model.generate(prompt, &sampling)?;
        let mut scores = Vec::with_capacity(gens.len());
        for g in &gens {
            let record = model.verify(g, mechanism, 0)?;
            scores.push(record.proxy_utility);
        }
        let _ = &verify_cfg;
        by_prompt.insert(prompt.prompt_id.clone(), (gens, scores));
    }
    let joined = Joined { by_prompt };
    let terms = gap_terms(&joined, &weight)?;
    let report = GapReport::from_terms(terms, 1.0)?;
    let n = report.per_prompt.len() as f64;
    let base = report.per_prompt.iter().map(|t| t.base_utility).sum::<f64>() / n;
    let filtered = report.per_prompt.iter().map(|t| t.reweighted_utility).sum::<f64>() / n;
    let denom = p_correct * tpr + (1.0 - p_correct) * fpr;
    let closed_accuracy = if denom > 0.0 {
        p_correct * tpr / denom
    } else {
        p_correct
    };
    Ok(SimulateOutcome {
        n_prompts,
        n_generations,
        base_accuracy: base,
        filtered_accuracy: filtered,
        gap: report.gap,
        relative_gap: report.relative_gap,
        n_fallback: report.n_fallback,
        closed_form_accuracy: closed_accuracy,
        closed_form_gap: closed_accuracy - p_correct,
    })
}
