//! Resumable execution of a training grid and the pruning runs applied to
//! the selected baselines.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::dsp::{AudioClip, FeatureConfig};
use crate::error::{Error, Result};
use crate::metrics::{delta_report, evaluate, EvalReport, PerformanceMetric};
use crate::nn::{load_checkpoint, save_checkpoint, train, Architecture, Checkpoint, ModelSpec, TrainConfig};
use crate::pipeline::{featurize_splits, SplitFeatures};
use crate::pruning::{prune_train, sparsity_summary, PruneConfig};
use crate::selection::{select, CriterionKind, SelectionCriterion, DEFAULT_TOLERANCE};
use crate::Executor;

use super::grid::{expand_grid, pruning_id, pruning_seed, ExperimentGrid, TrainingPoint};
use super::record::{latest_records, read_log, write_results, write_timings, ExperimentRecord, RecordLog, Stage};

/// How baselines for pruning are chosen from the training results: within
/// each (sample rate, architecture) pair, the top `m` models under each
/// criterion, duplicates removed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineRule {
    #[serde(default = "default_criteria")]
    pub criteria: Vec<CriterionKind>,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_tolerance")]
    pub accuracy_tolerance: f64,
}

fn default_criteria() -> Vec<CriterionKind> {
    vec![CriterionKind::HighAccuracy, CriterionKind::LowBiasHighAccuracy]
}

fn default_m() -> usize {
    3
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

impl Default for BaselineRule {
    fn default() -> Self {
        Self { criteria: default_criteria(), m: default_m(), accuracy_tolerance: default_tolerance() }
    }
}

/// Everything that determines a sweep's results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub grid: ExperimentGrid,
    /// Its seed is replaced by each experiment's own seed.
    pub train: TrainConfig,
    /// Template for pruning runs: epochs, batch size and initial sparsity
    /// are taken from here, the grid supplies the rest.
    pub prune: PruneConfig,
    pub metric: PerformanceMetric,
    pub baselines: BaselineRule,
    pub run_pruning: bool,
}

/// A selected baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub experiment_id: String,
    pub index: usize,
    pub sample_rate: u32,
    pub architecture: String,
    /// Criteria under which it was selected, with its rank (0 is best).
    pub selected_by: Vec<(CriterionKind, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutcome {
    /// Latest record of every experiment, training rows first.
    pub records: Vec<ExperimentRecord>,
    pub baselines: Vec<Baseline>,
    /// Experiments actually run in this invocation.
    pub executed: usize,
}

#[derive(Serialize, Deserialize)]
struct SweepMeta {
    fingerprint: String,
    training_experiments: usize,
    pruning_runs_per_baseline: usize,
}

/// Output layout of a sweep directory.
pub struct SweepPaths {
    pub root: PathBuf,
}

impl SweepPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    pub fn log(&self) -> PathBuf {
        self.root.join("records.jsonl")
    }
    pub fn results(&self) -> PathBuf {
        self.root.join("results.csv")
    }
    pub fn timings(&self) -> PathBuf {
        self.root.join("timings.csv")
    }
    pub fn baselines(&self) -> PathBuf {
        self.root.join("baselines.json")
    }
    pub fn meta(&self) -> PathBuf {
        self.root.join("sweep_meta.json")
    }
    pub fn checkpoint(&self, id: &str) -> PathBuf {
        self.root.join("checkpoints").join(format!("{id}.ckpt"))
    }
    pub fn sparsity(&self, id: &str) -> PathBuf {
        self.root.join("checkpoints").join(format!("{id}.sparsity.json"))
    }
    pub fn report(&self, id: &str) -> PathBuf {
        self.root.join("reports").join(format!("{id}.json"))
    }
}

/// 64-bit FNV-1a digest of the plan and the dataset listing, in hex.
fn fingerprint(plan: &SweepPlan, dataset: &Dataset) -> Result<String> {
    let text = serde_json::to_string(&(plan, dataset.utterances(), dataset.keywords()))?;
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    Ok(format!("{h:016x}"))
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

struct Context<'a> {
    plan: &'a SweepPlan,
    dataset: &'a Dataset,
    clips: &'a [AudioClip],
    paths: &'a SweepPaths,
    log: &'a RecordLog,
}

impl Context<'_> {
    fn features(&self, cfg: &FeatureConfig) -> Result<SplitFeatures> {
        featurize_splits(self.dataset, self.clips, cfg, &Executor::Sequential)
    }

    fn finish(&self, mut record: ExperimentRecord, start: Instant) -> Result<ExperimentRecord> {
        record.wall_clock_s = Some(start.elapsed().as_secs_f64());
        self.log.append(&record)?;
        Ok(record)
    }
}

fn base_record(stage: Stage, index: usize, id: String, seed: u64, pt: &TrainingPoint) -> ExperimentRecord {
    let f = &pt.features;
    ExperimentRecord {
        stage,
        index,
        experiment_id: id,
        seed,
        status: "ok".into(),
        sample_rate: f.sample_rate,
        feature_type: f.feature_type.as_str().into(),
        num_mel_banks: f.num_mel_banks,
        num_mfcc: f.num_mfcc,
        frame_length_ms: f.frame_length_ms,
        frame_step_pct: f.frame_step_pct,
        window: f.window.as_str().into(),
        architecture: pt.architecture.as_str().into(),
        ..Default::default()
    }
}

/// Checkpoint metadata describing how the model's inputs were produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub experiment_id: String,
    pub architecture: Architecture,
    pub features: FeatureConfig,
    pub learning_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_id: Option<String>,
}

fn run_training(ctx: &Context, pt: &TrainingPoint) -> Result<ExperimentRecord> {
    let start = Instant::now();
    let mut record = base_record(Stage::Train, pt.index, pt.id.clone(), pt.seed, pt);
    let result = (|| -> Result<(EvalReport, f64)> {
        let feats = ctx.features(&pt.features)?;
        let shape = feats
            .input_shape()
            .ok_or_else(|| Error::InsufficientData("the training split is empty".into()))?;
        let spec = ModelSpec::new(pt.architecture, shape, ctx.dataset.num_classes());
        let cfg = TrainConfig { seed: pt.seed, ..ctx.plan.train.clone() };
        let outcome = train(&spec, &feats.train, &feats.validation, &cfg)?;
        let mut report = evaluate(&outcome.model, &feats.test, ctx.plan.metric)?;
        report.id = pt.id.clone();
        let meta = CheckpointMeta {
            experiment_id: pt.id.clone(),
            architecture: pt.architecture,
            features: pt.features.clone(),
            learning_rate: outcome.learning_rate,
            baseline_id: None,
        };
        save_checkpoint(
            &ctx.paths.checkpoint(&pt.id),
            &Checkpoint { model: outcome.model, masks: None, metadata: serde_json::to_value(meta)? },
        )?;
        write_json(&ctx.paths.report(&pt.id), &report)?;
        Ok((report, outcome.learning_rate))
    })();
    match result {
        Ok((report, lr)) => {
            record.train_learning_rate = Some(lr);
            record.set_metrics(&report);
        }
        Err(e) => record.fail(&e),
    }
    ctx.finish(record, start)
}

struct PruneJob<'a> {
    index: usize,
    baseline: &'a ExperimentRecord,
    point: &'a TrainingPoint,
    config: PruneConfig,
}

fn run_pruning(ctx: &Context, job: &PruneJob) -> Result<ExperimentRecord> {
    let start = Instant::now();
    let id = pruning_id(job.index);
    let mut record = base_record(Stage::Prune, job.index, id.clone(), job.config.seed, job.point);
    record.baseline_id = Some(job.baseline.experiment_id.clone());
    record.train_learning_rate = job.baseline.train_learning_rate;
    record.final_sparsity = Some(job.config.final_sparsity);
    record.pruning_frequency = Some(job.config.frequency);
    record.pruning_schedule = Some(job.config.schedule.as_str().into());
    record.pruning_learning_rate = Some(job.config.pruning_learning_rate);
    let result = (|| -> Result<()> {
        let ckpt_path = ctx.paths.checkpoint(&job.baseline.experiment_id);
        if !ckpt_path.exists() {
            return Err(Error::MissingBaseline(ckpt_path.display().to_string()));
        }
        let base = load_checkpoint(&ckpt_path)?;
        let feats = ctx.features(&job.point.features)?;
        let mut base_report = evaluate(&base.model, &feats.test, ctx.plan.metric)?;
        base_report.id = job.baseline.experiment_id.clone();
        let outcome = prune_train(&base.model, &job.config, &feats.train, &feats.validation)?;
        let mut report = evaluate(&outcome.model, &feats.test, ctx.plan.metric)?;
        report.id = id.clone();
        let delta = delta_report(&base_report, &report)?;
        let sparsity = sparsity_summary(&outcome.model, job.config.final_sparsity);
        let meta = CheckpointMeta {
            experiment_id: id.clone(),
            architecture: job.point.architecture,
            features: job.point.features.clone(),
            learning_rate: job.config.pruning_learning_rate,
            baseline_id: Some(job.baseline.experiment_id.clone()),
        };
        save_checkpoint(
            &ctx.paths.checkpoint(&id),
            &Checkpoint {
                model: outcome.model,
                masks: Some(outcome.mask.into_masks()),
                metadata: serde_json::to_value(meta)?,
            },
        )?;
        write_json(&ctx.paths.sparsity(&id), &sparsity)?;
        write_json(&ctx.paths.report(&id), &serde_json::json!({ "report": report, "delta": delta }))?;
        record.set_metrics(&report);
        record.set_delta(&delta);
        record.achieved_sparsity = Some(sparsity.overall);
        Ok(())
    })();
    if let Err(e) = result {
        record.fail(&e);
    }
    ctx.finish(record, start)
}

/// Picks baselines from successful training rows with a defined bias.
pub fn select_baselines(records: &[ExperimentRecord], rule: &BaselineRule) -> Result<Vec<Baseline>> {
    let mut groups: Vec<((u32, String), Vec<&ExperimentRecord>)> = Vec::new();
    for r in records.iter().filter(|r| r.stage == Stage::Train && r.is_ok()) {
        if r.overall_mcc.is_none() || r.reliability_bias.is_none() {
            continue;
        }
        let key = (r.sample_rate, r.architecture.clone());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    let mut out: Vec<Baseline> = Vec::new();
    for ((sample_rate, architecture), cands) in groups {
        let scored: Vec<(f64, f64)> =
            cands.iter().map(|r| (r.overall_mcc.unwrap_or(0.0), r.reliability_bias.unwrap_or(0.0))).collect();
        for &kind in &rule.criteria {
            let crit = SelectionCriterion { kind, accuracy_tolerance: rule.accuracy_tolerance, m: rule.m };
            for (rank, i) in select(&scored, &crit)?.into_iter().enumerate() {
                let r = cands[i];
                match out.iter_mut().find(|b| b.experiment_id == r.experiment_id) {
                    Some(b) => b.selected_by.push((kind, rank)),
                    None => out.push(Baseline {
                        experiment_id: r.experiment_id.clone(),
                        index: r.index,
                        sample_rate,
                        architecture: architecture.clone(),
                        selected_by: vec![(kind, rank)],
                    }),
                }
            }
        }
    }
    Ok(out)
}

/// Runs (or resumes) a sweep into `out_dir`.
///
/// `dataset` must have every utterance assigned to a split and `clips`
/// must be aligned with its utterances. Experiments already recorded as
/// `ok` in the log are not run again; failed ones are retried. Results do
/// not depend on `exec`.
pub fn run_sweep(
    plan: &SweepPlan,
    dataset: &Dataset,
    clips: &[AudioClip],
    out_dir: &Path,
    exec: &Executor,
) -> Result<SweepOutcome> {
    plan.train.validate()?;
    if plan.run_pruning {
        plan.prune.validate()?;
    }
    if clips.len() != dataset.len() {
        return Err(Error::Shape(format!("{} clips for {} utterances", clips.len(), dataset.len())));
    }
    if !dataset.all_assigned() {
        return Err(Error::InvalidConfig("every utterance needs a split before a sweep".into()));
    }
    let points = expand_grid(&plan.grid)?;
    let paths = SweepPaths::new(out_dir);
    for dir in [paths.root.clone(), paths.root.join("checkpoints"), paths.root.join("reports")] {
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let meta = SweepMeta {
        fingerprint: fingerprint(plan, dataset)?,
        training_experiments: points.len(),
        pruning_runs_per_baseline: plan.grid.pruning_size(),
    };
    if paths.meta().exists() {
        let text = std::fs::read_to_string(paths.meta()).map_err(|e| Error::io(paths.meta(), e))?;
        let old: SweepMeta = serde_json::from_str(&text)?;
        if old.fingerprint != meta.fingerprint {
            return Err(Error::InvalidConfig(format!(
                "{} holds a sweep with a different configuration or dataset",
                out_dir.display()
            )));
        }
    } else {
        write_json(&paths.meta(), &meta)?;
    }

    let previous = latest_records(read_log(&paths.log())?);
    let done: HashMap<(Stage, String), ExperimentRecord> = previous
        .into_iter()
        .filter(ExperimentRecord::is_ok)
        .map(|r| ((r.stage, r.experiment_id.clone()), r))
        .collect();
    let log = RecordLog::open(&paths.log())?;
    let ctx = Context { plan, dataset, clips, paths: &paths, log: &log };
    let mut executed = 0;

    let todo: Vec<&TrainingPoint> = points.iter().filter(|p| !done.contains_key(&(Stage::Train, p.id.clone()))).collect();
    executed += todo.len();
    let fresh: Vec<ExperimentRecord> = exec.map(&todo, |_, p| run_training(&ctx, p)).into_iter().collect::<Result<_>>()?;
    let mut by_id: BTreeMap<String, ExperimentRecord> =
        fresh.into_iter().map(|r| (r.experiment_id.clone(), r)).collect();
    let training: Vec<ExperimentRecord> = points
        .iter()
        .map(|p| by_id.remove(&p.id).or_else(|| done.get(&(Stage::Train, p.id.clone())).cloned()))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::InvalidConfig("training record missing after the training stage".into()))?;

    let mut all = training.clone();
    let mut baselines = Vec::new();
    if plan.run_pruning {
        baselines = select_baselines(&training, &plan.baselines)?;
        write_json(&paths.baselines(), &baselines)?;
        let per = plan.grid.pruning_points_with(&plan.prune);
        let mut jobs = Vec::new();
        for (bi, b) in baselines.iter().enumerate() {
            for (j, cfg) in per.iter().enumerate() {
                let index = bi * per.len() + j;
                jobs.push(PruneJob {
                    index,
                    baseline: &training[b.index],
                    point: &points[b.index],
                    config: PruneConfig { seed: pruning_seed(plan.grid.global_seed, index), ..cfg.clone() },
                });
            }
        }
        let todo: Vec<&PruneJob> =
            jobs.iter().filter(|j| !done.contains_key(&(Stage::Prune, pruning_id(j.index)))).collect();
        executed += todo.len();
        let fresh: Vec<ExperimentRecord> =
            exec.map(&todo, |_, j| run_pruning(&ctx, j)).into_iter().collect::<Result<_>>()?;
        let mut by_id: BTreeMap<String, ExperimentRecord> =
            fresh.into_iter().map(|r| (r.experiment_id.clone(), r)).collect();
        for j in &jobs {
            let id = pruning_id(j.index);
            if let Some(r) = by_id.remove(&id).or_else(|| done.get(&(Stage::Prune, id)).cloned()) {
                all.push(r);
            }
        }
    }
    write_results(&paths.results(), &all)?;
    write_timings(&paths.timings(), &all)?;
    Ok(SweepOutcome { records: all, baselines, executed })
}
