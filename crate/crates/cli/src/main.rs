//! `kwsbias` command-line entry point.
//!
//! Every subcommand resolves its configuration from defaults, an optional
//! TOML file and `--set key=value` overrides, and writes the resolved
//! snapshot as `config.resolved.toml` in its output directory. Failures
//! print one JSON line on stderr and exit with 2 (configuration) or 1
//! (runtime).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use kwsbias::config::Config;
use kwsbias::dataset::{load_manifest, load_manifest_with_keyword_selection, synth_dataset, write_manifest, Dataset};
use kwsbias::metrics::{delta_report, evaluate};
use kwsbias::nn::{load_checkpoint, save_checkpoint, train, Checkpoint, ModelSpec};
use kwsbias::pipeline::{featurize_clips, featurize_splits};
use kwsbias::pruning::{prune_train, sparsity_summary, PruneConfig};
use kwsbias::selection::{accuracy_threshold, select, CriterionKind, SelectionCriterion};
use kwsbias::sweep::{
    expand_grid, read_results, run_sweep, summarize, write_summary, CheckpointMeta, ExperimentRecord, Factor, Stage,
};
use kwsbias::{Error, Executor};

const SNAPSHOT: &str = "config.resolved.toml";

#[derive(Parser)]
#[command(name = "kwsbias", version, about = "Bias-aware keyword-spotting experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dotted override, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "KWSBIAS_OUT", default_value = "kwsbias-out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-group keyword corpus.
    Synth {
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        speakers_per_gender: Option<usize>,
        #[arg(long)]
        utterances: Option<usize>,
        #[arg(long)]
        sample_rate: Option<u32>,
    },
    /// Extract features for every utterance of a manifest.
    Featurize {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Train one model over the learning-rate grid and evaluate it.
    Train {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Prune a trained checkpoint and compare it with the baseline.
    Prune {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        baseline: PathBuf,
    },
    /// Evaluate a checkpoint on the test split.
    Evaluate {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        model: PathBuf,
    },
    /// Choose models from a results table.
    Select {
        /// A results.csv written by `sweep`.
        results: PathBuf,
        /// `high_accuracy`, `low_bias` or `low_bias_high_accuracy`.
        #[arg(long)]
        criterion: Option<CriterionKind>,
        /// Relative MCC slack for `low_bias_high_accuracy` (0.015 keeps rows within 1.5% of the best).
        #[arg(long)]
        tolerance: Option<f64>,
        /// Number of models to return.
        #[arg(long)]
        m: Option<usize>,
        /// Which rows to choose from.
        #[arg(long, default_value = "train")]
        stage: String,
    },
    /// Run a training grid and prune the selected baselines.
    Sweep {
        /// Manifest; a synthetic corpus is generated when omitted.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// `table1` (full grid) or `table9` (recommended grid).
        #[arg(long)]
        preset: Option<String>,
        /// Worker threads (0 = all cores, 1 = sequential).
        #[arg(long)]
        parallelism: Option<usize>,
        /// Write the expanded plan without running it.
        #[arg(long)]
        plan_only: bool,
    },
    /// Per-factor median and quartiles of MCC and reliability bias.
    Summarize {
        results: PathBuf,
        /// Factors to summarize; all by default.
        #[arg(long, value_delimiter = ',')]
        factors: Vec<Factor>,
    },
}

/// A failure and whether it stems from configuration.
struct Failure {
    error: Error,
    config: bool,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        let config = matches!(error, Error::InvalidConfig(_) | Error::Grid(_));
        Self { error, config }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let line = json!({ "error": f.error.kind(), "message": f.error.to_string() });
            let _ = writeln!(std::io::stderr(), "{line}");
            ExitCode::from(if f.config { 2 } else { 1 })
        }
    }
}

fn resolve(common: &Common, mut extra: Vec<String>) -> CliResult<Config> {
    let mut overrides = common.overrides.clone();
    if let Some(seed) = common.seed {
        overrides.push(format!("seed={seed}"));
    }
    overrides.append(&mut extra);
    Config::load(common.config.as_deref(), &overrides).map_err(|error| Failure { error, config: true })
}

fn prepare_out(out: &Path, cfg: &Config) -> CliResult<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::Io { path: out.into(), row: None, source: e })?;
    cfg.write_snapshot(&out.join(SNAPSHOT))?;
    Ok(())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::Io { path: path.into(), row: None, source: e })?;
    Ok(())
}

fn manifest_path(cfg: &Config, flag: &Option<PathBuf>) -> CliResult<PathBuf> {
    flag.clone().or_else(|| cfg.data.manifest.clone()).ok_or_else(|| {
        Failure::from(Error::InvalidConfig("no dataset: pass --dataset or set data.manifest".into()))
    })
}

/// Loads a manifest and applies balancing and splitting.
fn load_data(cfg: &Config, path: &Path) -> CliResult<Dataset> {
    let raw = if cfg.data.keyword_selection {
        load_manifest_with_keyword_selection(path)?
    } else {
        load_manifest(path)?
    };
    Ok(cfg.data.prepare(&raw)?)
}

fn run(cli: Cli) -> CliResult<()> {
    let common = &cli.common;
    let out = common.out.clone();
    match cli.command {
        Command::Synth { classes, speakers_per_gender, utterances, sample_rate } => {
            let mut extra = Vec::new();
            let mut push = |k: &str, v: Option<String>| {
                if let Some(v) = v {
                    extra.push(format!("synth.{k}={v}"));
                }
            };
            push("num_classes", classes.map(|v| v.to_string()));
            push("speakers_per_gender", speakers_per_gender.map(|v| v.to_string()));
            push("utterances_per_speaker", utterances.map(|v| v.to_string()));
            push("sample_rate", sample_rate.map(|v| v.to_string()));
            if let Some(seed) = common.seed {
                // the root seed drives the corpus directly
                extra.push(format!("synth.seed={seed}"));
            }
            let cfg = resolve(common, extra)?;
            prepare_out(&out, &cfg)?;
            let ds = synth_dataset(&cfg.synth, &out)?;
            println!("wrote {} utterances ({} classes) to {}", ds.len(), ds.num_classes(), out.join("manifest.csv").display());
        }
        Command::Featurize { dataset } => {
            let cfg = resolve(common, vec![])?;
            let path = manifest_path(&cfg, &dataset)?;
            let ds = load_data(&cfg, &path)?;
            prepare_out(&out, &cfg)?;
            let clips = ds.load_audio(&Executor::default())?;
            let feats = featurize_clips(&clips, &cfg.features, &Executor::default())?;
            let file = out.join("features.jsonl");
            let mut w = std::io::BufWriter::new(
                std::fs::File::create(&file).map_err(|e| Error::Io { path: file.clone(), row: None, source: e })?,
            );
            for (u, f) in ds.utterances().iter().zip(&feats) {
                let line = json!({
                    "audio_path": u.audio_path, "keyword": u.keyword, "class_index": u.class_index,
                    "speaker_id": u.speaker_id, "group": u.group, "split": u.split,
                    "num_frames": f.num_frames, "num_coeffs": f.num_coeffs, "values": f.values,
                });
                writeln!(w, "{line}").map_err(|e| Error::Io { path: file.clone(), row: None, source: e })?;
            }
            w.flush().map_err(|e| Error::Io { path: file.clone(), row: None, source: e })?;
            write_manifest(&ds, &out.join("manifest.csv"))?;
            println!("wrote {} feature matrices to {}", feats.len(), file.display());
        }
        Command::Train { dataset } => {
            let cfg = resolve(common, vec![])?;
            let path = manifest_path(&cfg, &dataset)?;
            let ds = load_data(&cfg, &path)?;
            prepare_out(&out, &cfg)?;
            let clips = ds.load_audio(&Executor::Sequential)?;
            let feats = featurize_splits(&ds, &clips, &cfg.features, &Executor::Sequential)?;
            let shape = feats
                .input_shape()
                .ok_or_else(|| Error::InsufficientData("the training split is empty".into()))?;
            let spec = ModelSpec::new(cfg.model.architecture, shape, ds.num_classes());
            let outcome = train(&spec, &feats.train, &feats.validation, &cfg.train)?;
            let mut report = evaluate(&outcome.model, &feats.test, cfg.performance_metric)?;
            report.id = "model".into();
            let meta = CheckpointMeta {
                experiment_id: "model".into(),
                architecture: cfg.model.architecture,
                features: cfg.features.clone(),
                learning_rate: outcome.learning_rate,
                baseline_id: None,
            };
            let metadata = serde_json::to_value(meta).map_err(Error::from)?;
            save_checkpoint(&out.join("model.ckpt"), &Checkpoint { model: outcome.model, masks: None, metadata })?;
            write_json(&out.join("train_history.json"), &outcome.history)?;
            write_json(&out.join("report.json"), &report)?;
            println!(
                "learning rate {}: test MCC {:.4}, reliability bias {}",
                outcome.learning_rate,
                report.overall_mcc,
                report.reliability_bias.map_or("undefined".into(), |b| format!("{b:.4}"))
            );
        }
        Command::Prune { dataset, baseline } => {
            let cfg = resolve(common, vec![])?;
            let path = manifest_path(&cfg, &dataset)?;
            if !baseline.exists() {
                return Err(Error::MissingBaseline(baseline.display().to_string()).into());
            }
            let base = load_checkpoint(&baseline)?;
            let meta: CheckpointMeta = serde_json::from_value(base.metadata.clone())
                .map_err(|e| Error::Checkpoint(format!("checkpoint metadata lacks a feature config: {e}")))?;
            let ds = load_data(&cfg, &path)?;
            prepare_out(&out, &cfg)?;
            let clips = ds.load_audio(&Executor::Sequential)?;
            let feats = featurize_splits(&ds, &clips, &meta.features, &Executor::Sequential)?;
            let pcfg: PruneConfig = cfg.prune.clone();
            let outcome = match prune_train(&base.model, &pcfg, &feats.train, &feats.validation) {
                Ok(o) => o,
                Err(Error::PruningFailure { reason, history }) => {
                    write_json(&out.join("prune_history.json"), &history)?;
                    return Err(Error::PruningFailure { reason, history }.into());
                }
                Err(e) => return Err(e.into()),
            };
            let mut base_report = evaluate(&base.model, &feats.test, cfg.performance_metric)?;
            base_report.id = meta.experiment_id.clone();
            let mut report = evaluate(&outcome.model, &feats.test, cfg.performance_metric)?;
            report.id = "pruned".into();
            let delta = delta_report(&base_report, &report)?;
            let sparsity = sparsity_summary(&outcome.model, pcfg.final_sparsity);
            let pmeta = CheckpointMeta {
                experiment_id: "pruned".into(),
                learning_rate: pcfg.pruning_learning_rate,
                baseline_id: Some(meta.experiment_id.clone()),
                ..meta
            };
            save_checkpoint(
                &out.join("pruned.ckpt"),
                &Checkpoint {
                    model: outcome.model,
                    masks: Some(outcome.mask.into_masks()),
                    metadata: serde_json::to_value(pmeta).map_err(Error::from)?,
                },
            )?;
            write_json(&out.join("pruned.sparsity.json"), &sparsity)?;
            write_json(&out.join("prune_history.json"), &outcome.history)?;
            write_json(&out.join("report.json"), &report)?;
            write_json(&out.join("delta.json"), &delta)?;
            println!(
                "sparsity {:.4}: test MCC {:.4} (delta {:+.4})",
                sparsity.overall, report.overall_mcc, delta.delta_metric
            );
        }
        Command::Evaluate { dataset, model } => {
            let cfg = resolve(common, vec![])?;
            let path = manifest_path(&cfg, &dataset)?;
            let ckpt = load_checkpoint(&model)?;
            let features = serde_json::from_value::<CheckpointMeta>(ckpt.metadata.clone())
                .map(|m| m.features)
                .unwrap_or_else(|_| cfg.features.clone());
            let ds = load_data(&cfg, &path)?;
            prepare_out(&out, &cfg)?;
            let clips = ds.load_audio(&Executor::Sequential)?;
            let feats = featurize_splits(&ds, &clips, &features, &Executor::Sequential)?;
            let mut report = evaluate(&ckpt.model, &feats.test, cfg.performance_metric)?;
            report.id = model.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            write_json(&out.join("report.json"), &report)?;
            println!(
                "test MCC {:.4}, reliability bias {}",
                report.overall_mcc,
                report.reliability_bias.map_or("undefined".into(), |b| format!("{b:.4}"))
            );
        }
        Command::Select { results, criterion, tolerance, m, stage } => {
            let mut extra = Vec::new();
            if let Some(c) = criterion {
                extra.push(format!("selection.kind={}", c.as_str()));
            }
            if let Some(t) = tolerance {
                extra.push(format!("selection.accuracy_tolerance={t:?}"));
            }
            if let Some(m) = m {
                extra.push(format!("selection.m={m}"));
            }
            let cfg = resolve(common, extra)?;
            let stage: Stage = serde_json::from_value(json!(stage))
                .map_err(|_| Error::InvalidConfig(format!("unknown stage {stage:?}")))?;
            prepare_out(&out, &cfg)?;
            let rows: Vec<ExperimentRecord> = read_results(&results)?
                .into_iter()
                .filter(|r| r.stage == stage && r.is_ok() && r.overall_mcc.is_some() && r.reliability_bias.is_some())
                .collect();
            let scored: Vec<(f64, f64)> =
                rows.iter().map(|r| (r.overall_mcc.unwrap_or(0.0), r.reliability_bias.unwrap_or(0.0))).collect();
            let crit: SelectionCriterion = cfg.selection;
            let chosen = select(&scored, &crit)?;
            println!("rank,experiment_id,overall_mcc,reliability_bias");
            let mut picked = Vec::new();
            for (rank, &i) in chosen.iter().enumerate() {
                let r = &rows[i];
                println!("{rank},{},{},{}", r.experiment_id, scored[i].0, scored[i].1);
                picked.push(json!({ "rank": rank, "experiment_id": r.experiment_id, "overall_mcc": scored[i].0, "reliability_bias": scored[i].1 }));
            }
            let threshold = (crit.kind == CriterionKind::LowBiasHighAccuracy)
                .then(|| accuracy_threshold(&scored, crit.accuracy_tolerance));
            write_json(
                &out.join("selection.json"),
                &json!({ "criterion": crit, "candidates": rows.len(), "mcc_threshold": threshold, "selected": picked }),
            )?;
        }
        Command::Sweep { dataset, preset, parallelism, plan_only } => {
            let mut extra = Vec::new();
            if let Some(p) = preset {
                let p: kwsbias::sweep::Preset = p.parse()?;
                let name = serde_json::to_value(p).map_err(Error::from)?;
                extra.push(format!("sweep.grid.preset={name}"));
            }
            if let Some(n) = parallelism {
                extra.push(format!("sweep.parallelism={n}"));
            }
            let cfg = resolve(common, extra)?;
            let plan = cfg.sweep_plan()?;
            prepare_out(&out, &cfg)?;
            if plan_only {
                let points = expand_grid(&plan.grid)?;
                write_json(&out.join("plan.json"), &points)?;
                println!(
                    "{} training experiments, {} pruning runs per baseline",
                    points.len(),
                    plan.grid.pruning_size()
                );
                return Ok(());
            }
            let path = match dataset.or_else(|| cfg.data.manifest.clone()) {
                Some(p) => p,
                None => {
                    let dir = out.join("data");
                    synth_dataset(&cfg.synth, &dir)?;
                    dir.join("manifest.csv")
                }
            };
            let ds = load_data(&cfg, &path)?;
            let exec = Executor::with_parallelism(cfg.sweep.parallelism);
            let clips = ds.load_audio(&exec)?;
            let outcome = run_sweep(&plan, &ds, &clips, &out, &exec)?;
            let failed = outcome.records.iter().filter(|r| !r.is_ok()).count();
            println!(
                "{} records ({} failed, {} run now), {} baselines; results in {}",
                outcome.records.len(),
                failed,
                outcome.executed,
                outcome.baselines.len(),
                out.join("results.csv").display()
            );
        }
        Command::Summarize { results, factors } => {
            let cfg = resolve(common, vec![])?;
            prepare_out(&out, &cfg)?;
            let factors = if factors.is_empty() {
                Factor::TRAINING.iter().chain(Factor::PRUNING.iter()).copied().collect()
            } else {
                factors
            };
            let rows = read_results(&results)?;
            let summary = summarize(&rows, &factors)?;
            let path = out.join("summary.csv");
            write_summary(&path, &summary)?;
            println!("{} factor levels summarized in {}", summary.len(), path.display());
        }
    }
    Ok(())
}
