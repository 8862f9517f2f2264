//! Analysis emitters over finished runs: weight sweeps, correlation
//! matrices, score distributions, scaling fits, ensembles, and verifier
//! variance. Every report is a pure function of the run store, so rerunning
//! a command reproduces its CSV and JSON byte for byte.

use std::collections::BTreeMap;
use std::path::Path;

use gaplab_core::gapmath::{
    fit_loglinear, gap_histogram, pearson, verification_variance, GapError, GapReport, Histogram,
    LogLinearFit, DEFAULT_HISTOGRAM_WIDTH,
};
use gaplab_core::types::{Mechanism, WeightFunction};
use gaplab_core::verify::ensemble_and;
use gaplab_core::weights::evaluate_weights;
use serde::{Deserialize, Serialize};

use crate::config::canonical_weight;
use crate::error::{Error, Result};
use crate::pipeline::{gap_terms, join_run};
use crate::store::{RunManifest, RunStore, SCHEMA_VERSION};

/// Inclusive proxy-score range a mechanism can emit.
pub fn score_range(mechanism: Mechanism, bracket_rounds: u32) -> (f64, f64) {
    match mechanism {
        Mechanism::Mc | Mechanism::CotBinary => (0.0, 1.0),
        Mechanism::CotScore => (1.0, 10.0),
        Mechanism::Tournament => (0.0, f64::from(bracket_rounds)),
    }
}

/// The default sweep grid: global thresholds spanning the mechanism's score
/// range, one per round for tournaments.
pub fn default_grid(mechanism: Mechanism, bracket_rounds: u32) -> Vec<WeightFunction> {
    match mechanism {
        Mechanism::Mc => (1..=9)
            .map(|i| WeightFunction::IndicatorGlobal {
                tau: f64::from(i) / 10.0,
            })
            .collect(),
        Mechanism::CotBinary => vec![WeightFunction::IndicatorGlobal { tau: 0.5 }],
        Mechanism::CotScore => (1..=10)
            .map(|k| WeightFunction::IndicatorGlobal { tau: f64::from(k) })
            .collect(),
        Mechanism::Tournament => (1..=bracket_rounds)
            .map(|k| WeightFunction::IndicatorGlobal { tau: f64::from(k) })
            .collect(),
    }
}

fn validate_grid(
    mechanism: Mechanism,
    grid: &[WeightFunction],
    bracket_rounds: u32,
) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::config("sweep grid is empty"));
    }
    let (lo, hi) = score_range(mechanism, bracket_rounds);
    for weight in grid {
        weight.validate()?;
        if let WeightFunction::IndicatorGlobal { tau } = weight {
            if *tau < lo || *tau > hi {
                return Err(Error::config(format!(
                    "grid threshold {tau} outside the {} score range [{lo}, {hi}]",
                    mechanism.as_str()
                )));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    /// Weight-function slug, the grid coordinate.
    pub parameter: String,
    pub weight: WeightFunction,
    pub base_accuracy: f64,
    pub filtered_accuracy: f64,
    pub gap: f64,
    pub relative_gap: f64,
    pub n_fallback: usize,
    pub n_excluded_rel: usize,
    /// Tournament rows only: survivor accuracy of this round minus the
    /// previous round's survivors.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prev_round_gap: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub v: u32,
    pub run_id: String,
    pub mechanism: Mechanism,
    pub rows: Vec<SweepRow>,
}

/// Evaluates one gap report per grid point over the same stored records.
pub fn sweep(
    store: &RunStore,
    manifest: &RunManifest,
    u_max: f64,
    mechanism: Mechanism,
    grid: &[WeightFunction],
) -> Result<SweepReport> {
    let joined = join_run(store, mechanism)?;
    let bracket = if mechanism == Mechanism::Tournament {
        Some(store.read_tournament_summary()?)
    } else {
        None
    };
    let bracket_rounds = bracket.as_ref().map_or(0, |s| s.bracket_rounds);
    validate_grid(mechanism, grid, bracket_rounds)?;

    // Mean survivor utility per bracket round, averaged over prompts.
    let round_means: Option<Vec<f64>> = bracket.as_ref().map(|summary| {
        let mut means = vec![0.0f64; bracket_rounds as usize + 1];
        for (pid, bracket) in &summary.per_prompt {
            let by_index: BTreeMap<u32, f64> = joined.by_prompt[pid]
                .0
                .iter()
                .map(|g| (g.gen_index, g.utility))
                .collect();
            for (k, survivors) in bracket.rounds.iter().enumerate() {
                let mean = survivors.iter().map(|i| by_index[i]).sum::<f64>()
                    / survivors.len() as f64;
                means[k] += mean;
            }
        }
        let n = summary.per_prompt.len() as f64;
        means.iter().map(|m| m / n).collect()
    });

    let mut rows = Vec::with_capacity(grid.len());
    for weight in grid {
        let terms = gap_terms(&joined, weight)?;
        let report = GapReport::from_terms(terms, u_max)?;
        let n = report.per_prompt.len() as f64;
        let base = report.per_prompt.iter().map(|t| t.base_utility).sum::<f64>() / n;
        let filtered = report.per_prompt.iter().map(|t| t.reweighted_utility).sum::<f64>() / n;
        let prev_round_gap = match (&round_means, weight) {
            (Some(means), WeightFunction::IndicatorGlobal { tau })
                if tau.fract() == 0.0 && *tau >= 1.0 && *tau <= f64::from(bracket_rounds) =>
            {
                let k = *tau as usize;
                Some(means[k] - means[k - 1])
            }
            _ => None,
        };
        rows.push(SweepRow {
            parameter: weight.slug(),
            weight: *weight,
            base_accuracy: base,
            filtered_accuracy: filtered,
            gap: report.gap,
            relative_gap: report.relative_gap,
            n_fallback: report.n_fallback,
            n_excluded_rel: report.n_excluded_rel,
            prev_round_gap,
        });
    }
    Ok(SweepReport {
        v: SCHEMA_VERSION,
        run_id: manifest.run_id.clone(),
        mechanism,
        rows,
    })
}

impl SweepReport {
    pub fn csv(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let header = [
            "parameter",
            "base_accuracy",
            "filtered_accuracy",
            "gap",
            "relative_gap",
            "n_fallback",
            "n_excluded_rel",
            "prev_round_gap",
        ]
        .map(String::from)
        .to_vec();
        let rows = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.parameter.clone(),
                    fmt_float(r.base_accuracy),
                    fmt_float(r.filtered_accuracy),
                    fmt_float(r.gap),
                    fmt_float(r.relative_gap),
                    r.n_fallback.to_string(),
                    r.n_excluded_rel.to_string(),
                    r.prev_round_gap.map(fmt_float).unwrap_or_default(),
                ]
            })
            .collect();
        (header, rows)
    }
}

fn constant_series(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] == w[1])
}

/// Symmetric matrix of pairwise Pearson coefficients; `None` marks pairs
/// left undefined by a constant series.
pub type PearsonMatrix = Vec<Vec<Option<f64>>>;

/// Pairwise Pearson matrix; zero-variance pairs become `None` and are listed
/// in the returned flag set. Diagonal entries of non-constant series are 1.
fn pearson_matrix(series: &[Vec<f64>]) -> Result<(PearsonMatrix, Vec<(usize, usize)>)> {
    let m = series.len();
    let mut matrix = vec![vec![None; m]; m];
    let mut flagged = Vec::new();
    for i in 0..m {
        for j in i..m {
            let entry = if constant_series(&series[i]) || constant_series(&series[j]) {
                None
            } else if i == j {
                Some(1.0)
            } else {
                match pearson(&series[i], &series[j]) {
                    Ok(v) => Some(v),
                    Err(GapError::ZeroVariance { .. }) => None,
                    Err(e) => return Err(e.into()),
                }
            };
            if entry.is_none() {
                flagged.push((i, j));
            }
            matrix[i][j] = entry;
            matrix[j][i] = entry;
        }
    }
    Ok((matrix, flagged))
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrelationReport {
    pub v: u32,
    pub run_id: String,
    /// Row and column order for both matrices.
    pub mechanisms: Vec<Mechanism>,
    /// Pearson over per-generation proxy scores; `null` where a series is
    /// constant.
    pub utility_pearson: PearsonMatrix,
    pub utility_flagged: Vec<(Mechanism, Mechanism)>,
    /// Pearson over per-prompt gap contributions.
    pub gap_pearson: PearsonMatrix,
    pub gap_flagged: Vec<(Mechanism, Mechanism)>,
    /// Per-mechanism histograms of per-prompt gaps.
    pub gap_histograms: BTreeMap<Mechanism, Histogram>,
}

/// Correlates mechanisms pairwise: per-generation proxy scores and
/// per-prompt gaps under each mechanism's weight function.
pub fn correlation_report(
    store: &RunStore,
    manifest: &RunManifest,
    u_max: f64,
    entries: &[(Mechanism, WeightFunction)],
) -> Result<CorrelationReport> {
    if entries.len() < 2 {
        return Err(Error::config(
            "correlation needs at least two verified mechanisms",
        ));
    }
    let mechanisms: Vec<Mechanism> = entries.iter().map(|(m, _)| *m).collect();
    let mut score_series: Vec<Vec<f64>> = Vec::with_capacity(entries.len());
    let mut gap_series: Vec<Vec<f64>> = Vec::with_capacity(entries.len());
    let mut gap_histograms = BTreeMap::new();
    for (mechanism, weight) in entries {
        let joined = join_run(store, *mechanism)?;
        // by_prompt iterates sorted and generations are index-sorted, so
        // every series aligns on the same (prompt, generation) order.
        let scores: Vec<f64> = joined
            .by_prompt
            .values()
            .flat_map(|(_, s)| s.iter().copied())
            .collect();
        let terms = gap_terms(&joined, weight)?;
        GapReport::from_terms(terms.clone(), u_max)?;
        let gaps: Vec<f64> = terms
            .iter()
            .map(|t| t.reweighted_utility - t.base_utility)
            .collect();
        gap_histograms.insert(*mechanism, gap_histogram(&gaps, DEFAULT_HISTOGRAM_WIDTH)?);
        score_series.push(scores);
        gap_series.push(gaps);
    }
    let (utility_pearson, util_flags) = pearson_matrix(&score_series)?;
    let (gap_pearson, gap_flags) = pearson_matrix(&gap_series)?;
    let to_pairs = |flags: &[(usize, usize)]| {
        flags
            .iter()
            .map(|&(i, j)| (mechanisms[i], mechanisms[j]))
            .collect()
    };
    Ok(CorrelationReport {
        v: SCHEMA_VERSION,
        run_id: manifest.run_id.clone(),
        utility_pearson,
        utility_flagged: to_pairs(&util_flags),
        gap_pearson,
        gap_flagged: to_pairs(&gap_flags),
        gap_histograms,
        mechanisms,
    })
}

impl CorrelationReport {
    pub fn csv(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let header = ["matrix", "row", "col", "pearson"].map(String::from).to_vec();
        let mut rows = Vec::new();
        for (name, matrix) in [
            ("utility", &self.utility_pearson),
            ("gap", &self.gap_pearson),
        ] {
            for (i, row) in matrix.iter().enumerate() {
                for (j, entry) in row.iter().enumerate() {
                    rows.push(vec![
                        name.to_string(),
                        self.mechanisms[i].as_str().to_string(),
                        self.mechanisms[j].as_str().to_string(),
                        entry.map(fmt_float).unwrap_or_default(),
                    ]);
                }
            }
        }
        (header, rows)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScoreDistribution {
    pub v: u32,
    pub run_id: String,
    /// Record count per score value 1..=10, zeros included.
    pub counts: BTreeMap<u8, u64>,
    /// Most frequent score; smallest wins ties.
    pub mode: u8,
    pub total: u64,
    /// Records whose judgment failed to parse (scored as 1).
    pub flagged: u64,
}

/// Tallies stored CoT-Score verdicts over the 1..=10 scale.
pub fn score_distribution(store: &RunStore, manifest: &RunManifest) -> Result<ScoreDistribution> {
    let records = store.load_verifications(Mechanism::CotScore)?;
    if records.is_empty() {
        return Err(Error::data("no cot_score verification records in the run"));
    }
    let mut counts: BTreeMap<u8, u64> = (1..=10).map(|k| (k, 0)).collect();
    let mut flagged = 0u64;
    for r in &records {
        let score = r.proxy_utility;
        if score.fract() != 0.0 || !(1.0..=10.0).contains(&score) {
            return Err(Error::data(format!(
                "cot_score record for prompt {} generation {} has non-scale score {score}",
                r.prompt_id, r.gen_index
            )));
        }
        *counts.get_mut(&(score as u8)).expect("keys 1..=10 preset") += 1;
        if !r.parse_ok {
            flagged += 1;
        }
    }
    let mode = counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(k, _)| *k)
        .expect("counts preset non-empty");
    Ok(ScoreDistribution {
        v: SCHEMA_VERSION,
        run_id: manifest.run_id.clone(),
        counts,
        mode,
        total: records.len() as u64,
        flagged,
    })
}

impl ScoreDistribution {
    pub fn csv(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let header = ["score", "count"].map(String::from).to_vec();
        let rows = self
            .counts
            .iter()
            .map(|(k, c)| vec![k.to_string(), c.to_string()])
            .collect();
        (header, rows)
    }
}

/// One model's scaling datum. Flops are user-supplied metadata; fits refuse
/// to run without them.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingPoint {
    pub model: String,
    #[serde(default)]
    pub family: Option<String>,
    #[serde(default)]
    pub flops: Option<f64>,
    #[serde(default)]
    pub relative_gap: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingResidual {
    pub model: String,
    pub flops: f64,
    pub relative_gap: f64,
    pub fitted: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilyFit {
    pub family: String,
    pub n_points: usize,
    pub fit: LogLinearFit,
    /// True when relative gap is non-decreasing in flops within the family.
    pub monotone: bool,
    pub points: Vec<ScalingResidual>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub v: u32,
    pub families: Vec<FamilyFit>,
}

/// Reads scaling points from a JSON array or a CSV with header
/// `model,family,flops,relative_gap`.
pub fn load_scaling_points(path: &Path) -> Result<Vec<ScalingPoint>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::data(format!("read {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "csv") {
        parse_scaling_csv(&text).map_err(|e| Error::data(format!("{}: {e}", path.display())))
    } else {
        serde_json::from_str(&text).map_err(|e| Error::data(format!("{}: {e}", path.display())))
    }
}

fn parse_scaling_csv(text: &str) -> std::result::Result<Vec<ScalingPoint>, String> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or("empty file")?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| columns.iter().position(|c| *c == name);
    let model_col = find("model").ok_or("missing model column")?;
    let family_col = find("family");
    let flops_col = find("flops");
    let gap_col = find("relative_gap");
    let mut points = Vec::new();
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let get = |col: Option<usize>| col.and_then(|c| fields.get(c)).map(|s| s.to_string());
        let parse_num = |col: Option<usize>, name: &str| -> std::result::Result<Option<f64>, String> {
            match get(col) {
                None => Ok(None),
                Some(s) if s.is_empty() => Ok(None),
                Some(s) => s
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|e| format!("line {}: bad {name} `{s}`: {e}", lineno + 1)),
            }
        };
        points.push(ScalingPoint {
            model: get(Some(model_col)).ok_or_else(|| format!("line {}: missing model", lineno + 1))?,
            family: get(family_col).filter(|s| !s.is_empty()),
            flops: parse_num(flops_col, "flops")?,
            relative_gap: parse_num(gap_col, "relative_gap")?,
        });
    }
    Ok(points)
}

/// Fits relative gap against log10(flops) per model family and checks
/// monotonicity of the gap in compute.
pub fn scaling_report(points: &[ScalingPoint]) -> Result<ScalingReport> {
    if points.is_empty() {
        return Err(Error::config("scaling fit needs at least one point"));
    }
    let mut families: BTreeMap<String, Vec<(f64, f64, &str)>> = BTreeMap::new();
    for p in points {
        let flops = p.flops.ok_or_else(|| {
            Error::config(format!(
                "model {} has no flops value; scaling fits need user-supplied flops",
                p.model
            ))
        })?;
        let gap = p.relative_gap.ok_or_else(|| {
            Error::config(format!("model {} has no relative_gap value", p.model))
        })?;
        let family = p.family.clone().unwrap_or_else(|| String::from("all"));
        families.entry(family).or_default().push((flops, gap, &p.model));
    }
    let mut fits = Vec::with_capacity(families.len());
    for (family, mut rows) in families {
        if rows.len() < 2 {
            return Err(Error::config(format!(
                "family {family} has {} point(s); fits need at least 2",
                rows.len()
            )));
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let flops: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let gaps: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let fit = fit_loglinear(&flops, &gaps)
            .map_err(|e| Error::config(format!("scaling fit for family {family}: {e}")))?;
        let monotone = gaps.windows(2).all(|w| w[0] <= w[1]);
        let points = rows
            .iter()
            .map(|&(f, g, model)| {
                let fitted = fit.intercept + fit.slope * f.log10();
                ScalingResidual {
                    model: model.to_string(),
                    flops: f,
                    relative_gap: g,
                    fitted,
                    residual: g - fitted,
                }
            })
            .collect();
        fits.push(FamilyFit {
            family,
            n_points: rows.len(),
            fit,
            monotone,
            points,
        });
    }
    Ok(ScalingReport {
        v: SCHEMA_VERSION,
        families: fits,
    })
}

impl ScalingReport {
    pub fn csv(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let header = ["family", "model", "flops", "relative_gap", "fitted", "residual"]
            .map(String::from)
            .to_vec();
        let mut rows = Vec::new();
        for fam in &self.families {
            for p in &fam.points {
                rows.push(vec![
                    fam.family.clone(),
                    p.model.clone(),
                    fmt_float(p.flops),
                    fmt_float(p.relative_gap),
                    fmt_float(p.fitted),
                    fmt_float(p.residual),
                ]);
            }
        }
        (header, rows)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleRow {
    pub mechanisms: Vec<Mechanism>,
    /// Generations kept by the AND of the member masks.
    pub kept: usize,
    pub base_accuracy: f64,
    pub filtered_accuracy: f64,
    pub gap: f64,
    pub relative_gap: f64,
    pub n_fallback: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleReport {
    pub v: u32,
    pub run_id: String,
    pub weights: Vec<(Mechanism, WeightFunction)>,
    pub rows: Vec<EnsembleRow>,
}

/// Gap of each mechanism alone and of AND-combined kept-sets (every pair,
/// plus the full set). Members keep a generation when their weight for it is
/// positive.
pub fn ensemble_report(
    store: &RunStore,
    manifest: &RunManifest,
    u_max: f64,
    entries: &[(Mechanism, WeightFunction)],
) -> Result<EnsembleReport> {
    if entries.is_empty() {
        return Err(Error::config("ensemble needs at least one mechanism"));
    }
    for (i, (m, _)) in entries.iter().enumerate() {
        if entries[..i].iter().any(|(other, _)| other == m) {
            return Err(Error::config(format!(
                "mechanism {} listed twice in the ensemble",
                m.as_str()
            )));
        }
    }

    // (prompt -> kept mask) per member, plus shared per-prompt utilities.
    let mut member_masks: Vec<BTreeMap<String, Vec<bool>>> = Vec::with_capacity(entries.len());
    let mut utilities: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (i, (mechanism, weight)) in entries.iter().enumerate() {
        weight.validate()?;
        let joined = join_run(store, *mechanism)?;
        if i == 0 {
            utilities = joined
                .by_prompt
                .iter()
                .map(|(pid, (gens, _))| {
                    (pid.clone(), gens.iter().map(|g| g.utility).collect())
                })
                .collect();
        }
        let mut masks = BTreeMap::new();
        for (pid, (_, scores)) in &joined.by_prompt {
            let w = evaluate_weights(weight, scores)?;
            masks.insert(pid.clone(), w.iter().map(|&x| x > 0.0).collect());
        }
        member_masks.push(masks);
    }

    let mut combos: Vec<Vec<usize>> = (0..entries.len()).map(|i| vec![i]).collect();
    for i in 0..entries.len() {
        for j in i + 1..entries.len() {
            combos.push(vec![i, j]);
        }
    }
    if entries.len() > 2 {
        combos.push((0..entries.len()).collect());
    }

    let mut rows = Vec::with_capacity(combos.len());
    for combo in combos {
        let mut terms = Vec::with_capacity(utilities.len());
        let mut kept = 0usize;
        for (pid, utils) in &utilities {
            let masks: Vec<Vec<bool>> = combo
                .iter()
                .map(|&i| member_masks[i][pid].clone())
                .collect();
            let mask = ensemble_and(&masks)?;
            kept += mask.iter().filter(|&&b| b).count();
            let weights: Vec<f64> = mask.iter().map(|&b| f64::from(u8::from(b))).collect();
            let (reweighted, fallback) =
                gaplab_core::gapmath::reweighted_utility(utils, &weights)?;
            terms.push(gaplab_core::gapmath::PromptGapTerm {
                prompt_id: pid.clone(),
                base_utility: utils.iter().sum::<f64>() / utils.len() as f64,
                reweighted_utility: reweighted,
                fallback,
            });
        }
        let report = GapReport::from_terms(terms, u_max)?;
        let n = report.per_prompt.len() as f64;
        rows.push(EnsembleRow {
            mechanisms: combo.iter().map(|&i| entries[i].0).collect(),
            kept,
            base_accuracy: report.per_prompt.iter().map(|t| t.base_utility).sum::<f64>() / n,
            filtered_accuracy: report
                .per_prompt
                .iter()
                .map(|t| t.reweighted_utility)
                .sum::<f64>()
                / n,
            gap: report.gap,
            relative_gap: report.relative_gap,
            n_fallback: report.n_fallback,
        });
    }
    Ok(EnsembleReport {
        v: SCHEMA_VERSION,
        run_id: manifest.run_id.clone(),
        weights: entries.to_vec(),
        rows,
    })
}

impl EnsembleReport {
    pub fn csv(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let header = [
            "mechanisms",
            "kept",
            "base_accuracy",
            "filtered_accuracy",
            "gap",
            "relative_gap",
            "n_fallback",
        ]
        .map(String::from)
        .to_vec();
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let label = r
                    .mechanisms
                    .iter()
                    .map(Mechanism::as_str)
                    .collect::<Vec<_>>()
                    .join("+");
                vec![
                    label,
                    r.kept.to_string(),
                    fmt_float(r.base_accuracy),
                    fmt_float(r.filtered_accuracy),
                    fmt_float(r.gap),
                    fmt_float(r.relative_gap),
                    r.n_fallback.to_string(),
                ]
            })
            .collect();
        (header, rows)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VarianceReport {
    pub v: u32,
    pub run_id: String,
    pub mechanism: Mechanism,
    /// Acceptance threshold applied to each verifier sample.
    pub tau: f64,
    pub n_generations: usize,
    pub samples_min: u32,
    pub samples_max: u32,
    pub mean_p_hat: f64,
    pub mean_variance: f64,
    /// Histogram over per-generation p̂(1−p̂) values.
    pub histogram: Histogram,
}

/// Acceptance-rate variance study over repeated verifier samples: per
/// generation, p̂ is the fraction of samples at or above `tau` and the
/// binomial variance p̂(1−p̂) is aggregated.
pub fn variance_report(
    store: &RunStore,
    manifest: &RunManifest,
    mechanism: Mechanism,
    tau: Option<f64>,
) -> Result<VarianceReport> {
    let tau = tau.unwrap_or_else(|| match canonical_weight(mechanism) {
        WeightFunction::IndicatorGlobal { tau } => tau,
        _ => 0.5,
    });
    let records = store.load_verifications(mechanism)?;
    if records.is_empty() {
        return Err(Error::data(format!(
            "no {} verification records in the run",
            mechanism.as_str()
        )));
    }
    let mut groups: BTreeMap<(String, u32), (u32, u32)> = BTreeMap::new();
    for r in records {
        let entry = groups.entry((r.prompt_id, r.gen_index)).or_insert((0, 0));
        entry.0 += u32::from(r.proxy_utility >= tau);
        entry.1 += 1;
    }
    let mut variances = Vec::with_capacity(groups.len());
    let mut p_sum = 0.0f64;
    let mut samples_min = u32::MAX;
    let mut samples_max = 0u32;
    for (accepts, samples) in groups.values() {
        let p_hat = f64::from(*accepts) / f64::from(*samples);
        p_sum += p_hat;
        variances.push(verification_variance(p_hat)?);
        samples_min = samples_min.min(*samples);
        samples_max = samples_max.max(*samples);
    }
    let n = groups.len();
    Ok(VarianceReport {
        v: SCHEMA_VERSION,
        run_id: manifest.run_id.clone(),
        mechanism,
        tau,
        n_generations: n,
        samples_min,
        samples_max,
        mean_p_hat: p_sum / n as f64,
        mean_variance: variances.iter().sum::<f64>() / n as f64,
        histogram: gap_histogram(&variances, DEFAULT_HISTOGRAM_WIDTH)?,
    })
}

impl VarianceReport {
    pub fn csv(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let header = ["bin_index", "lo", "count"].map(String::from).to_vec();
        let rows = self
            .histogram
            .bins
            .iter()
            .map(|b| vec![b.index.to_string(), fmt_float(b.lo), b.count.to_string()])
            .collect();
        (header, rows)
    }
}

/// Shortest round-trip decimal form, the same rendering serde_json uses.
pub fn fmt_float(v: f64) -> String {
    format!("{v}")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn csv_line(fields: &[String]) -> String {
    fields.iter().map(|f| csv_field(f)).collect::<Vec<_>>().join(",")
}

/// Renders header and rows as CSV text with a trailing newline.
pub fn to_csv(header: &[String], rows: &[Vec<String>]) -> String {
    let mut out = csv_line(header);
    out.push('\n');
    for row in rows {
        out.push_str(&csv_line(row));
        out.push('\n');
    }
    out
}

/// Writes the CSV rendering of a report table.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    std::fs::write(path, to_csv(header, rows))?;
    Ok(())
}

/// Space-aligned plain-text table for terminal output.
pub fn render_table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            if i < widths.len() {
                widths[i] = widths[i].max(cell.len());
            }
        }
    }
    let mut out = String::new();
    let mut emit = |cells: &[String]| {
        let line: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{c:<width$}", width = widths.get(i).copied().unwrap_or(0)))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    };
    emit(header);
    emit(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>());
    for row in rows {
        emit(row);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quotes_embedded_delimiters() {
        let line = csv_line(&[
            String::from("plain"),
            String::from("a,b"),
            String::from("say \"hi\""),
        ]);
        assert_eq!(line, "plain,\"a,b\",\"say \"\"hi\"\"\"");
    }

    #[test]
    fn table_aligns_columns() {
        let header = vec![String::from("name"), String::from("n")];
        let rows = vec![vec![String::from("longer-name"), String::from("7")]];
        let text = render_table(&header, &rows);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "name         n");
        assert_eq!(lines[1], "-----------  -");
        assert_eq!(lines[2], "longer-name  7");
    }

    #[test]
    fn default_grids_cover_score_ranges() {
        assert_eq!(default_grid(Mechanism::CotScore, 0).len(), 10);
        assert_eq!(default_grid(Mechanism::Tournament, 3).len(), 3);
        assert!(validate_grid(
            Mechanism::CotScore,
            &[WeightFunction::IndicatorGlobal { tau: 11.0 }],
            0
        )
        .is_err());
    }

    #[test]
    fn pearson_matrix_flags_constants() {
        let series = vec![vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0], vec![5.0, 5.0, 5.0]];
        let (matrix, flagged) = pearson_matrix(&series).unwrap();
        assert_eq!(matrix[0][0], Some(1.0));
        assert!((matrix[0][1].unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(matrix[0][2], None);
        assert_eq!(matrix[2][2], None);
        assert_eq!(flagged, vec![(0, 2), (1, 2), (2, 2)]);
    }

    #[test]
    fn scaling_monotone_family_fits_positive_slope() {
        let points: Vec<ScalingPoint> = [(0.5e9, 0.44), (1.5e9, 4.45), (7.0e9, 16.46), (72.0e9, 20.16)]
            .iter()
            .enumerate()
            .map(|(i, &(flops, gap))| ScalingPoint {
                model: format!("m{i}"),
                family: Some(String::from("fam")),
                flops: Some(flops),
                relative_gap: Some(gap),
            })
            .collect();
        let report = scaling_report(&points).unwrap();
        assert_eq!(report.families.len(), 1);
        let fam = &report.families[0];
        assert!(fam.monotone);
        assert!(fam.fit.slope > 0.0);
        assert_eq!(fam.points.len(), 4);
    }

    #[test]
    fn scaling_refuses_missing_flops() {
        let points = vec![ScalingPoint {
            model: String::from("m0"),
            family: None,
            flops: None,
            relative_gap: Some(1.0),
        }];
        let err = scaling_report(&points).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn scaling_csv_roundtrip() {
        let text = "model,family,flops,relative_gap\nm0,fam,1e9,0.5\nm1,fam,2e9,1.5\n";
        let points = parse_scaling_csv(text).unwrap();
        assert_eq!(points.len(), 2);
        assert_eq!(points[0].model, "m0");
        assert_eq!(points[1].flops, Some(2e9));
        let report = scaling_report(&points).unwrap();
        assert!(report.families[0].fit.r_squared > 0.999);
    }
}
