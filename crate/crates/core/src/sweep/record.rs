//! Per-experiment result rows and their on-disk forms: an append-only
//! JSON-lines log and a sorted CSV table.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::dataset::Group;
use crate::error::{Error, Result};
use crate::metrics::{DeltaReport, EvalReport};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    #[default]
    Train,
    Prune,
}

/// One row of the results table. Failed experiments keep their
/// configuration columns and leave the metric columns empty.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub stage: Stage,
    pub index: usize,
    pub experiment_id: String,
    pub baseline_id: Option<String>,
    pub seed: u64,
    /// `ok` or `failed:<reason>`.
    pub status: String,
    pub sample_rate: u32,
    pub feature_type: String,
    pub num_mel_banks: usize,
    pub num_mfcc: Option<usize>,
    pub frame_length_ms: u32,
    pub frame_step_pct: u32,
    pub window: String,
    pub architecture: String,
    pub train_learning_rate: Option<f64>,
    pub final_sparsity: Option<f64>,
    pub pruning_frequency: Option<usize>,
    pub pruning_schedule: Option<String>,
    pub pruning_learning_rate: Option<f64>,
    pub overall_mcc: Option<f64>,
    pub mcc_male: Option<f64>,
    pub mcc_female: Option<f64>,
    pub bias_male: Option<f64>,
    pub bias_female: Option<f64>,
    pub reliability_bias: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1_weighted: Option<f64>,
    pub kappa: Option<f64>,
    pub delta_mcc: Option<f64>,
    pub delta_reliability_bias: Option<f64>,
    pub achieved_sparsity: Option<f64>,
    /// Kept in the JSON log and the timing table, never in the results table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ExperimentRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn fail(&mut self, err: &Error) {
        self.status = format!("failed:{}", err.kind());
        self.error = Some(err.to_string());
    }

    /// Copies the test metrics of `report` into the row.
    pub fn set_metrics(&mut self, report: &EvalReport) {
        self.overall_mcc = Some(report.overall_mcc);
        self.mcc_male = report.mcc_by_group.get(&Group::Male).copied();
        self.mcc_female = report.mcc_by_group.get(&Group::Female).copied();
        self.bias_male = report.bias_by_group.get(&Group::Male).and_then(|b| b.value());
        self.bias_female = report.bias_by_group.get(&Group::Female).and_then(|b| b.value());
        self.reliability_bias = report.reliability_bias;
        self.precision = Some(report.aux.precision);
        self.recall = Some(report.aux.recall);
        self.f1_weighted = Some(report.aux.f1_weighted);
        self.kappa = Some(report.aux.kappa);
    }

    pub fn set_delta(&mut self, delta: &DeltaReport) {
        self.delta_mcc = Some(delta.delta_metric);
        self.delta_reliability_bias = delta.delta_reliability_bias;
    }

    fn sort_key(&self) -> (Stage, usize) {
        (self.stage, self.index)
    }

    /// The row as written to the results table.
    fn for_table(&self) -> Self {
        Self { wall_clock_s: None, error: None, ..self.clone() }
    }
}

/// Append-only JSON-lines log. Each line is flushed as soon as it is
/// written, so an interrupted sweep loses at most the line in flight.
pub struct RecordLog {
    file: Mutex<File>,
}

impl RecordLog {
    pub fn open(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
        Ok(Self { file: Mutex::new(file) })
    }

    pub fn append(&self, record: &ExperimentRecord) -> Result<()> {
        let mut line = serde_json::to_string(record)?;
        line.push('\n');
        let mut f = self.file.lock().unwrap_or_else(|p| p.into_inner());
        f.write_all(line.as_bytes()).and_then(|_| f.flush()).map_err(|e| Error::io("records.jsonl", e))
    }
}

/// Reads a log, ignoring a final line cut short by an interruption. A
/// malformed line anywhere else is an error. The file is rewritten without
/// the partial line so later appends start on a fresh line.
pub fn read_log(path: &Path) -> Result<Vec<ExperimentRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<String> = BufReader::new(file).lines().collect::<std::io::Result<_>>().map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut truncated = false;
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(r) => records.push(r),
            Err(_) if i + 1 == lines.len() => truncated = true,
            Err(e) => {
                return Err(Error::InvalidConfig(format!("{}: line {} is not a record: {e}", path.display(), i + 1)));
            }
        }
    }
    if truncated {
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        for r in &records {
            writeln!(f, "{}", serde_json::to_string(r)?).map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(records)
}

/// Latest record per experiment id, in (stage, index) order.
pub fn latest_records(records: Vec<ExperimentRecord>) -> Vec<ExperimentRecord> {
    let mut by_id = std::collections::HashMap::new();
    for r in records {
        by_id.insert((r.stage, r.experiment_id.clone()), r);
    }
    let mut out: Vec<ExperimentRecord> = by_id.into_values().collect();
    out.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()).then_with(|| a.experiment_id.cmp(&b.experiment_id)));
    out
}

/// Writes the results table sorted by stage and index. An empty slice
/// produces a header-only file.
pub fn write_results(path: &Path, records: &[ExperimentRecord]) -> Result<()> {
    let mut rows: Vec<ExperimentRecord> = records.iter().map(ExperimentRecord::for_table).collect();
    rows.sort_by_key(|r| r.sort_key());
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(RESULT_COLUMNS)?;
    }
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_results(path: &Path) -> Result<Vec<ExperimentRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().ne(RESULT_COLUMNS.iter().copied()) {
        return Err(Error::Summary(format!("{} does not have the results-table columns", path.display())));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Per-experiment wall-clock times.
pub fn write_timings(path: &Path, records: &[ExperimentRecord]) -> Result<()> {
    let mut rows: Vec<&ExperimentRecord> = records.iter().collect();
    rows.sort_by_key(|r| r.sort_key());
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["experiment_id", "status", "wall_clock_s"])?;
    for r in rows {
        let t = r.wall_clock_s.map(|t| format!("{t:.3}")).unwrap_or_default();
        w.write_record([r.experiment_id.as_str(), r.status.as_str(), t.as_str()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Column order of the results table.
pub const RESULT_COLUMNS: [&str; 32] = [
    "stage",
    "index",
    "experiment_id",
    "baseline_id",
    "seed",
    "status",
    "sample_rate",
    "feature_type",
    "num_mel_banks",
    "num_mfcc",
    "frame_length_ms",
    "frame_step_pct",
    "window",
    "architecture",
    "train_learning_rate",
    "final_sparsity",
    "pruning_frequency",
    "pruning_schedule",
    "pruning_learning_rate",
    "overall_mcc",
    "mcc_male",
    "mcc_female",
    "bias_male",
    "bias_female",
    "reliability_bias",
    "precision",
    "recall",
    "f1_weighted",
    "kappa",
    "delta_mcc",
    "delta_reliability_bias",
    "achieved_sparsity",
];
