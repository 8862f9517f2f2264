//! Command-line interface: argument parsing and the command handlers that
//! tie configs, run stores, backends, and reports together.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use gaplab_core::types::{MatchMode, Mechanism, PromptInstance, TaskSpec, WeightFunction};

use crate::backend::{HttpBackend, HttpModel, Journal, ModelHandle, SyntheticModel};
use crate::config::{parse_weight_arg, BackendKind, Config};
use crate::dataset;
use crate::error::{Error, Result};
use crate::pipeline;
use crate::report as reports;
use crate::store::{write_json_pretty, RunStore};
use crate::templates::build_task;

#[derive(Debug, Parser)]
#[command(name = "gaplab", version, about = "Measure how much self-verification improves a generator")]
pub struct Cli {
    /// TOML config describing the task, backend, and verification setup.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run directory holding the manifest and record files.
    #[arg(long, global = true)]
    pub run_dir: Option<PathBuf>,
    /// Override the sampling seed from the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Override the backend's in-flight request cap.
    #[arg(long, global = true)]
    pub max_inflight: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MechanismArg {
    #[value(name = "mc")]
    Mc,
    #[value(name = "cot_binary")]
    CotBinary,
    #[value(name = "cot_score")]
    CotScore,
    #[value(name = "tournament")]
    Tournament,
}

impl From<MechanismArg> for Mechanism {
    fn from(arg: MechanismArg) -> Mechanism {
        match arg {
            MechanismArg::Mc => Mechanism::Mc,
            MechanismArg::CotBinary => Mechanism::CotBinary,
            MechanismArg::CotScore => Mechanism::CotScore,
            MechanismArg::Tournament => Mechanism::Tournament,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatchModeArg {
    Flexible,
    Exact,
}

impl From<MatchModeArg> for MatchMode {
    fn from(arg: MatchModeArg) -> MatchMode {
        match arg {
            MatchModeArg::Flexible => MatchMode::Flexible,
            MatchModeArg::Exact => MatchMode::Exact,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample generations for every task prompt into the run directory.
    Gen,
    /// Score stored generations with a verification mechanism.
    Verify {
        /// Mechanism override; defaults to the config's verify.mechanism.
        #[arg(long)]
        mechanism: Option<MechanismArg>,
    },
    /// Compute and store the gap report for a verified run.
    Gap {
        #[arg(long)]
        mechanism: Option<MechanismArg>,
        /// Weight function, e.g. tau=0.5, top=0.7, exp=0.5, constant.
        #[arg(long)]
        weight: Option<String>,
        /// Re-parse stored generation text under this answer-match mode.
        #[arg(long)]
        match_mode: Option<MatchModeArg>,
    },
    /// Evaluate a grid of weight functions over the same stored records.
    Sweep {
        #[arg(long)]
        mechanism: Option<MechanismArg>,
        /// Grid points (repeatable), e.g. --point tau=0.5 --point top=0.7.
        #[arg(long = "point")]
        points: Vec<String>,
    },
    /// Re-verify another run's generations with this config's model.
    Cross {
        /// Source run directory whose generations are re-verified.
        #[arg(long)]
        gen_run: PathBuf,
        #[arg(long)]
        mechanism: Option<MechanismArg>,
        #[arg(long)]
        weight: Option<String>,
    },
    /// Run the iterative self-improvement loop under the run directory.
    Iterate {
        /// Round count override; defaults to the config's iterate.rounds.
        #[arg(long)]
        rounds: Option<u32>,
    },
    /// Export the filtered training set from a verified run.
    Export {
        #[arg(long)]
        mechanism: Option<MechanismArg>,
        #[arg(long)]
        weight: Option<String>,
    },
    /// Analysis reports over finished runs.
    #[command(subcommand)]
    Report(ReportCommand),
    /// In-memory comparison of a measured gap with its closed form.
    Simulate {
        /// Per-prompt probability mass on the correct answer.
        #[arg(long, default_value_t = 0.5)]
        p_correct: f64,
        /// Verifier true-positive rate.
        #[arg(long, default_value_t = 0.9)]
        tpr: f64,
        /// Verifier false-positive rate.
        #[arg(long, default_value_t = 0.3)]
        fpr: f64,
        #[arg(long, default_value_t = 500)]
        prompts: usize,
        #[arg(long, default_value_t = 128)]
        generations: u32,
        #[arg(long, default_value = "cot_binary")]
        mechanism: MechanismArg,
        #[arg(long, default_value = "tau=0.5")]
        weight: String,
    },
    /// Write starter datasets and synthetic model specs.
    #[command(subcommand)]
    Dataset(DatasetCommand),
}

#[derive(Debug, Subcommand)]
pub enum ReportCommand {
    /// Pearson matrices between mechanisms plus per-mechanism gap histograms.
    Correlation {
        /// Mechanisms to correlate (repeatable); defaults to all verified.
        #[arg(long = "mechanism")]
        mechanisms: Vec<MechanismArg>,
    },
    /// CoT-Score distribution over the 1..10 scale.
    Scores,
    /// Log-linear fit of relative gap against user-supplied flops.
    Scaling {
        /// JSON array or CSV of {model, family, flops, relative_gap}.
        #[arg(long)]
        points: PathBuf,
        /// Output directory; defaults to --run-dir, then the working dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Individual and AND-combined mechanism gaps.
    Ensemble {
        #[arg(long = "mechanism")]
        mechanisms: Vec<MechanismArg>,
    },
    /// Acceptance-rate variance over repeated verifier samples.
    Variance {
        #[arg(long)]
        mechanism: Option<MechanismArg>,
        /// Acceptance threshold; defaults to the mechanism's canonical one.
        #[arg(long)]
        tau: Option<f64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Generate unique-solution 4x4 puzzles with their solutions as gold.
    Sudoku {
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output JSONL path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate synthetic prompts plus the model spec that answers them.
    Synthetic {
        #[arg(long, default_value_t = 200)]
        prompts: usize,
        #[arg(long, default_value_t = 0.5)]
        p_correct: f64,
        /// Wrong answers sharing the non-correct mass per prompt.
        #[arg(long, default_value_t = 3)]
        distractors: usize,
        #[arg(long, default_value_t = 0.9)]
        tpr: f64,
        #[arg(long, default_value_t = 0.3)]
        fpr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output JSONL path for the prompts.
        #[arg(long)]
        out_prompts: PathBuf,
        /// Output JSON path for the synthetic model spec.
        #[arg(long)]
        out_model: PathBuf,
    },
}

struct Globals {
    config: Option<PathBuf>,
    run_dir: Option<PathBuf>,
    seed: Option<u64>,
    max_inflight: Option<usize>,
}

impl Globals {
    fn config(&self) -> Result<Config> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| Error::config("--config is required for this command"))?;
        let mut cfg = Config::load(path)?;
        if let Some(seed) = self.seed {
            cfg.sampling.seed = Some(seed);
        }
        if let Some(cap) = self.max_inflight {
            if cap == 0 {
                return Err(Error::config("--max-inflight must be at least 1"));
            }
            cfg.backend.max_inflight = cap;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn run_dir(&self) -> Result<&Path> {
        self.run_dir
            .as_deref()
            .ok_or_else(|| Error::config("--run-dir is required for this command"))
    }
}

fn run_id_for(dir: &Path) -> String {
    dir.file_name()
        .map_or_else(|| String::from("run"), |s| s.to_string_lossy().into_owned())
}

fn load_task(cfg: &Config) -> Result<TaskSpec> {
    let few_shot = match &cfg.task.few_shot_data {
        Some(path) => dataset::load_exemplars(path)?,
        None => Vec::new(),
    };
    build_task(&cfg.task, few_shot)
}

fn load_prompts(cfg: &Config) -> Result<Vec<PromptInstance>> {
    let data = cfg.task.data.as_ref().ok_or_else(|| {
        Error::config("task.data is required here; `gaplab dataset` writes starter files")
    })?;
    dataset::load_prompts(data, cfg.task.kind)
}

fn build_model(cfg: &Config, store: Option<&RunStore>) -> Result<ModelHandle> {
    match cfg.backend.kind {
        BackendKind::Http => {
            let journal = match store {
                Some(s) => Some(
                    Journal::open(&s.journal_path())
                        .map_err(crate::backend::BackendError::from)?,
                ),
                None => None,
            };
            let backend = HttpBackend::new(&cfg.backend, journal)?;
            Ok(ModelHandle::Http(Box::new(HttpModel::new(
                backend,
                cfg.backend.model.clone(),
                cfg.sampling.resolved(),
            ))))
        }
        BackendKind::Synthetic => {
            let path = cfg.backend.synthetic_spec.as_ref().ok_or_else(|| {
                Error::config("synthetic backend requires backend.synthetic_spec")
            })?;
            Ok(ModelHandle::Synthetic(SyntheticModel::load(
                path,
                cfg.backend.model.clone(),
                cfg.sampling.resolved().seed,
            )?))
        }
    }
}

fn present_mechanisms(store: &RunStore) -> Vec<Mechanism> {
    Mechanism::ALL
        .iter()
        .copied()
        .filter(|m| store.verifications_path(*m).is_file())
        .collect()
}

fn weight_or(cfg: &Config, arg: Option<&str>, mechanism: Mechanism) -> Result<WeightFunction> {
    match arg {
        Some(s) => parse_weight_arg(s),
        None => Ok(cfg.weight_for(mechanism)),
    }
}

fn emit_report<T: serde::Serialize>(
    dir: &Path,
    stem: &str,
    report: &T,
    header: &[String],
    rows: &[Vec<String>],
) -> Result<()> {
    let json_path = dir.join(format!("{stem}.json"));
    write_json_pretty(&json_path, report)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    reports::write_csv(&csv_path, header, rows)?;
    print!("{}", reports::render_table(header, rows));
    println!("wrote {} and {}", json_path.display(), csv_path.display());
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    let Cli {
        config,
        run_dir,
        seed,
        max_inflight,
        command,
    } = cli;
    let g = Globals {
        config,
        run_dir,
        seed,
        max_inflight,
    };
    match command {
        Command::Gen => {
            let cfg = g.config()?;
            let dir = g.run_dir()?;
            let store = RunStore::open(dir)?;
            let model = build_model(&cfg, Some(&store))?;
            let task = load_task(&cfg)?;
            let prompts = load_prompts(&cfg)?;
            let manifest = pipeline::new_manifest(
                &cfg,
                run_id_for(dir),
                model.model_id().to_string(),
                model.model_id().to_string(),
                None,
            );
            let manifest = pipeline::ensure_manifest(&store, &manifest)?;
            let stats = pipeline::run_generation(
                &store,
                &model,
                &task,
                &prompts,
                &manifest.sampling,
                cfg.backend.max_inflight,
            )?;
            println!(
                "generated {} record(s) ({} already present) across {} prompt(s); base accuracy {:.4}",
                stats.new_records, stats.skipped_records, stats.prompts, stats.mean_utility
            );
            Ok(())
        }
        Command::Verify { mechanism } => {
            let cfg = g.config()?;
            let dir = g.run_dir()?;
            let store = RunStore::open(dir)?;
            let model = build_model(&cfg, Some(&store))?;
            let task = load_task(&cfg)?;
            let prompts = load_prompts(&cfg)?;
            let manifest = store.read_manifest()?;
            if model.model_id() != manifest.verifier_model {
                eprintln!(
                    "warning: verifying with {} but the manifest records verifier {}",
                    model.model_id(),
                    manifest.verifier_model
                );
            }
            let mut vcfg = cfg.verify.clone();
            if let Some(m) = mechanism {
                vcfg.mechanism = m.into();
            }
            let stats = pipeline::run_verification(
                &store,
                &model,
                &task,
                &prompts,
                &vcfg,
                manifest.seed,
                cfg.backend.max_inflight,
            )?;
            println!(
                "verified with {}: {} new record(s), {} already present, {:.2}% flagged",
                stats.mechanism.as_str(),
                stats.new_records,
                stats.skipped_records,
                100.0 * stats.flagged_fraction()
            );
            Ok(())
        }
        Command::Gap {
            mechanism,
            weight,
            match_mode,
        } => {
            let cfg = g.config()?;
            let dir = g.run_dir()?;
            let store = RunStore::open(dir)?;
            let manifest = store.read_manifest()?;
            let task = load_task(&cfg)?;
            let mech = mechanism.map_or(cfg.verify.mechanism, Into::into);
            let w = weight_or(&cfg, weight.as_deref(), mech)?;
            let prompts = match match_mode {
                Some(_) => load_prompts(&cfg)?,
                None => Vec::new(),
            };
            let reparse = match_mode.map(|m| (prompts.as_slice(), MatchMode::from(m)));
            let report = pipeline::compute_gap_report(&store, &manifest, &task, mech, w, reparse)?;
            let path = store.write_report(mech, &w, &report)?;
            println!(
                "gap {:.6}  relative gap {:.6}  base {:.4} -> filtered {:.4}  ({} prompts, {} fallback, {} excluded)",
                report.gap,
                report.relative_gap,
                report.base_accuracy,
                report.filtered_accuracy,
                report.n_prompts,
                report.n_fallback,
                report.n_excluded_rel
            );
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Sweep { mechanism, points } => {
            let cfg = g.config()?;
            let dir = g.run_dir()?;
            let store = RunStore::open(dir)?;
            let manifest = store.read_manifest()?;
            let mech = mechanism.map_or(cfg.verify.mechanism, Into::into);
            let grid = if points.is_empty() {
                let rounds = if mech == Mechanism::Tournament {
                    store.read_tournament_summary()?.bracket_rounds
                } else {
                    0
                };
                reports::default_grid(mech, rounds)
            } else {
                points
                    .iter()
                    .map(|p| parse_weight_arg(p))
                    .collect::<Result<Vec<_>>>()?
            };
            let report = reports::sweep(&store, &manifest, cfg.task.u_max, mech, &grid)?;
            let (header, rows) = report.csv();
            emit_report(dir, &format!("sweep.{}", mech.as_str()), &report, &header, &rows)
        }
        Command::Cross {
            gen_run,
            mechanism,
            weight,
        } => {
            let cfg = g.config()?;
            let dir = g.run_dir()?;
            if gen_run.as_path() == dir {
                return Err(Error::config("--gen-run must differ from --run-dir"));
            }
            let store = RunStore::open(dir)?;
            let model = build_model(&cfg, Some(&store))?;
            let task = load_task(&cfg)?;
            let prompts = load_prompts(&cfg)?;
            let mut vcfg = cfg.verify.clone();
            if let Some(m) = mechanism {
                vcfg.mechanism = m.into();
            }
            let w = weight_or(&cfg, weight.as_deref(), vcfg.mechanism)?;
            let report = pipeline::cross_verify(
                &gen_run,
                &store,
                &model,
                &task,
                &prompts,
                &vcfg,
                w,
                run_id_for(dir),
                cfg.backend.max_inflight,
            )?;
            let path = store.write_report(vcfg.mechanism, &w, &report)?;
            println!(
                "cross gap ({} verified by {}): gap {:.6}  relative gap {:.6}",
                report.generator_model, report.verifier_model, report.gap, report.relative_gap
            );
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Iterate { rounds } => {
            let mut cfg = g.config()?;
            if let Some(r) = rounds {
                if r == 0 {
                    return Err(Error::config("--rounds must be at least 1"));
                }
                cfg.iterate.rounds = r;
            }
            let dir = g.run_dir()?;
            std::fs::create_dir_all(dir)?;
            let model = build_model(&cfg, None)?;
            let task = load_task(&cfg)?;
            let prompts = load_prompts(&cfg)?;
            let outcome = pipeline::iterate(
                dir,
                &cfg,
                &task,
                &prompts,
                model,
                &run_id_for(dir),
                cfg.backend.max_inflight,
            )?;
            let mut header: Vec<String> = ["round", "accuracy", "gap", "relative_gap"]
                .map(String::from)
                .to_vec();
            for k in &cfg.iterate.pass_k {
                header.push(format!("pass@{k}"));
            }
            header.push(String::from("exported"));
            let rows: Vec<Vec<String>> = outcome
                .rounds
                .iter()
                .map(|r| {
                    let mut row = vec![
                        r.round.to_string(),
                        format!("{:.4}", r.accuracy),
                        format!("{:.6}", r.gap),
                        format!("{:.6}", r.relative_gap),
                    ];
                    for k in &cfg.iterate.pass_k {
                        row.push(
                            r.pass_at
                                .get(k)
                                .map_or_else(String::new, |v| format!("{v:.4}")),
                        );
                    }
                    row.push(r.exported_records.to_string());
                    row
                })
                .collect();
            print!("{}", reports::render_table(&header, &rows));
            if outcome.halted_early {
                println!("halted early: gap fell below the {} floor", cfg.iterate.gap_floor);
            }
            if outcome.awaiting_external {
                println!(
                    "paused for external training: fine-tune on the last round's export.jsonl, point backend.model at the result, and rerun iterate"
                );
            }
            Ok(())
        }
        Command::Export { mechanism, weight } => {
            let cfg = g.config()?;
            let dir = g.run_dir()?;
            let store = RunStore::open(dir)?;
            let task = load_task(&cfg)?;
            let prompts = load_prompts(&cfg)?;
            let mech = mechanism.map_or(cfg.verify.mechanism, Into::into);
            let w = weight_or(&cfg, weight.as_deref(), mech)?;
            let stats = pipeline::export_filtered(&store, &task, &prompts, mech, w)?;
            if stats.empty {
                eprintln!("warning: the filter kept no generations; the export is empty");
            }
            println!(
                "wrote {} record(s) to {}",
                stats.records,
                store.export_path().display()
            );
            Ok(())
        }
        Command::Report(rc) => run_report(&g, rc),
        Command::Simulate {
            p_correct,
            tpr,
            fpr,
            prompts,
            generations,
            mechanism,
            weight,
        } => {
            let w = parse_weight_arg(&weight)?;
            let out = pipeline::simulate(
                p_correct,
                tpr,
                fpr,
                prompts,
                generations,
                mechanism.into(),
                w,
                g.seed.unwrap_or(0),
            )?;
            println!(
                "base accuracy      {:.4}   ({} prompts x {} generations)",
                out.base_accuracy, out.n_prompts, out.n_generations
            );
            println!(
                "filtered accuracy  {:.4}   closed form {:.4}",
                out.filtered_accuracy, out.closed_form_accuracy
            );
            println!(
                "gap                {:.4}   closed form {:.4}",
                out.gap, out.closed_form_gap
            );
            println!(
                "relative gap       {:.4}   fallback prompts {}",
                out.relative_gap, out.n_fallback
            );
            Ok(())
        }
        Command::Dataset(dc) => run_dataset(dc),
    }
}

fn run_report(g: &Globals, rc: ReportCommand) -> Result<()> {
    if let ReportCommand::Scaling { points, out } = rc {
        let pts = reports::load_scaling_points(&points)?;
        let report = reports::scaling_report(&pts)?;
        let out_dir = out
            .or_else(|| g.run_dir.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&out_dir)?;
        for fam in &report.families {
            println!(
                "family {}: slope {:.4} per decade, r^2 {:.4}, monotone {}",
                fam.family, fam.fit.slope, fam.fit.r_squared, fam.monotone
            );
        }
        let (header, rows) = report.csv();
        return emit_report(&out_dir, "scaling", &report, &header, &rows);
    }

    let cfg = g.config()?;
    let dir = g.run_dir()?;
    let store = RunStore::open(dir)?;
    let manifest = store.read_manifest()?;
    match rc {
        ReportCommand::Scaling { .. } => unreachable!("handled above"),
        ReportCommand::Correlation { mechanisms } => {
            let mechs: Vec<Mechanism> = if mechanisms.is_empty() {
                present_mechanisms(&store)
            } else {
                mechanisms.into_iter().map(Into::into).collect()
            };
            let entries: Vec<(Mechanism, WeightFunction)> =
                mechs.iter().map(|&m| (m, cfg.weight_for(m))).collect();
            let report =
                reports::correlation_report(&store, &manifest, cfg.task.u_max, &entries)?;
            for (a, b) in &report.utility_flagged {
                eprintln!(
                    "note: constant scores leave ({}, {}) undefined in the utility matrix",
                    a.as_str(),
                    b.as_str()
                );
            }
            let (header, rows) = report.csv();
            emit_report(dir, "correlation", &report, &header, &rows)
        }
        ReportCommand::Scores => {
            let report = reports::score_distribution(&store, &manifest)?;
            let (header, rows) = report.csv();
            println!(
                "mode {}  ({} records, {} flagged)",
                report.mode, report.total, report.flagged
            );
            emit_report(dir, "scores", &report, &header, &rows)
        }
        ReportCommand::Ensemble { mechanisms } => {
            let mechs: Vec<Mechanism> = if mechanisms.is_empty() {
                present_mechanisms(&store)
            } else {
                mechanisms.into_iter().map(Into::into).collect()
            };
            let entries: Vec<(Mechanism, WeightFunction)> =
                mechs.iter().map(|&m| (m, cfg.weight_for(m))).collect();
            let report = reports::ensemble_report(&store, &manifest, cfg.task.u_max, &entries)?;
            let (header, rows) = report.csv();
            emit_report(dir, "ensemble", &report, &header, &rows)
        }
        ReportCommand::Variance { mechanism, tau } => {
            let mech = mechanism.map_or(cfg.verify.mechanism, Into::into);
            let report = reports::variance_report(&store, &manifest, mech, tau)?;
            println!(
                "{}: mean acceptance {:.4}, mean variance {:.6} over {} generation(s) ({}..{} samples each)",
                mech.as_str(),
                report.mean_p_hat,
                report.mean_variance,
                report.n_generations,
                report.samples_min,
                report.samples_max
            );
            let (header, rows) = report.csv();
            emit_report(dir, &format!("variance.{}", mech.as_str()), &report, &header, &rows)
        }
    }
}

fn run_dataset(dc: DatasetCommand) -> Result<()> {
    match dc {
        DatasetCommand::Sudoku { count, seed, out } => {
            if count == 0 {
                return Err(Error::config("--count must be at least 1"));
            }
            let prompts = dataset::sudoku_prompts(count, seed);
            std::fs::write(&out, dataset::prompts_to_jsonl(&prompts))?;
            println!("wrote {count} puzzle(s) to {}", out.display());
            Ok(())
        }
        DatasetCommand::Synthetic {
            prompts,
            p_correct,
            distractors,
            tpr,
            fpr,
            seed,
            out_prompts,
            out_model,
        } => {
            let (rows, spec) =
                dataset::synthetic_dataset(prompts, p_correct, distractors, tpr, fpr, seed)?;
            std::fs::write(&out_prompts, dataset::prompts_to_jsonl(&rows))?;
            write_json_pretty(&out_model, &spec)?;
            println!(
                "wrote {} prompt(s) to {} and the model spec to {}",
                rows.len(),
                out_prompts.display(),
                out_model.display()
            );
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn global_flags_parse_after_subcommand() {
        let cli = Cli::parse_from([
            "gaplab", "gap", "--config", "c.toml", "--run-dir", "runs/a", "--weight", "tau=0.5",
        ]);
        assert_eq!(cli.config.as_deref(), Some(Path::new("c.toml")));
        assert!(matches!(
            cli.command,
            Command::Gap { weight: Some(ref w), .. } if w == "tau=0.5"
        ));
    }

    #[test]
    fn mechanism_names_match_file_suffixes() {
        let cli = Cli::parse_from(["gaplab", "verify", "--mechanism", "cot_binary"]);
        match cli.command {
            Command::Verify { mechanism } => {
                assert_eq!(Mechanism::from(mechanism.unwrap()), Mechanism::CotBinary);
            }
            _ => panic!("parsed into the wrong command"),
        }
    }
}
