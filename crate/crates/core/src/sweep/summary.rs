//! Per-factor-level distribution summaries of a results table.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::record::{ExperimentRecord, Stage};

/// Linear-interpolation quantile of sorted data: with `h = (n - 1) p`,
/// returns `x[floor h] + (h - floor h) (x[floor h + 1] - x[floor h])`.
pub fn quantile(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() || !(0.0..=1.0).contains(&p) {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
}

impl Quartiles {
    /// `None` for an empty sample. NaNs are dropped first.
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let mut v: Vec<f64> = values.into_iter().filter(|x| !x.is_nan()).collect();
        v.sort_by(f64::total_cmp);
        let q1 = quantile(&v, 0.25)?;
        let q3 = quantile(&v, 0.75)?;
        Some(Self { median: quantile(&v, 0.5)?, q1, q3, iqr: q3 - q1 })
    }
}

/// A design choice whose levels partition the results.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    SampleRate,
    FeatureType,
    NumMelBanks,
    NumMfcc,
    FrameLengthMs,
    FrameStepPct,
    Window,
    Architecture,
    FinalSparsity,
    PruningFrequency,
    PruningSchedule,
    PruningLearningRate,
}

impl Factor {
    pub const TRAINING: [Factor; 8] = [
        Factor::SampleRate,
        Factor::FeatureType,
        Factor::NumMelBanks,
        Factor::NumMfcc,
        Factor::FrameLengthMs,
        Factor::FrameStepPct,
        Factor::Window,
        Factor::Architecture,
    ];
    pub const PRUNING: [Factor; 4] =
        [Factor::FinalSparsity, Factor::PruningFrequency, Factor::PruningSchedule, Factor::PruningLearningRate];

    pub fn as_str(&self) -> &'static str {
        match self {
            Factor::SampleRate => "sample_rate",
            Factor::FeatureType => "feature_type",
            Factor::NumMelBanks => "num_mel_banks",
            Factor::NumMfcc => "num_mfcc",
            Factor::FrameLengthMs => "frame_length_ms",
            Factor::FrameStepPct => "frame_step_pct",
            Factor::Window => "window",
            Factor::Architecture => "architecture",
            Factor::FinalSparsity => "final_sparsity",
            Factor::PruningFrequency => "pruning_frequency",
            Factor::PruningSchedule => "pruning_schedule",
            Factor::PruningLearningRate => "pruning_learning_rate",
        }
    }

    pub fn stage(&self) -> Stage {
        if Self::PRUNING.contains(self) {
            Stage::Prune
        } else {
            Stage::Train
        }
    }

    /// The row's level of this factor, as text.
    pub fn level(&self, r: &ExperimentRecord) -> Option<String> {
        match self {
            Factor::SampleRate => Some(r.sample_rate.to_string()),
            Factor::FeatureType => Some(r.feature_type.clone()),
            Factor::NumMelBanks => Some(r.num_mel_banks.to_string()),
            Factor::NumMfcc => Some(r.num_mfcc.map_or_else(|| "none".to_string(), |n| n.to_string())),
            Factor::FrameLengthMs => Some(r.frame_length_ms.to_string()),
            Factor::FrameStepPct => Some(r.frame_step_pct.to_string()),
            Factor::Window => Some(r.window.clone()),
            Factor::Architecture => Some(r.architecture.clone()),
            Factor::FinalSparsity => r.final_sparsity.map(|v| v.to_string()),
            Factor::PruningFrequency => r.pruning_frequency.map(|v| v.to_string()),
            Factor::PruningSchedule => r.pruning_schedule.clone(),
            Factor::PruningLearningRate => r.pruning_learning_rate.map(|v| format!("{v:e}")),
        }
    }
}

impl std::str::FromStr for Factor {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::TRAINING
            .iter()
            .chain(Self::PRUNING.iter())
            .copied()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown factor {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub factor: Factor,
    pub level: String,
    /// Successful experiments at this level.
    pub count: usize,
    pub mcc: Quartiles,
    /// `None` when no experiment at this level has a defined bias.
    pub reliability_bias: Option<Quartiles>,
}

/// Summaries for each level of each factor, with levels in order of first
/// appearance. A factor only considers rows of its own stage, and only
/// successful rows count.
pub fn summarize(records: &[ExperimentRecord], factors: &[Factor]) -> Result<Vec<LevelSummary>> {
    let ok: Vec<&ExperimentRecord> = records.iter().filter(|r| r.is_ok() && r.overall_mcc.is_some()).collect();
    if ok.is_empty() {
        return Err(Error::Summary("no successful experiments to summarize".into()));
    }
    let mut out = Vec::new();
    for &factor in factors {
        let mut levels: Vec<(String, Vec<&ExperimentRecord>)> = Vec::new();
        for r in ok.iter().filter(|r| r.stage == factor.stage()) {
            let Some(level) = factor.level(r) else { continue };
            match levels.iter_mut().find(|(l, _)| *l == level) {
                Some((_, rows)) => rows.push(r),
                None => levels.push((level, vec![r])),
            }
        }
        for (level, rows) in levels {
            let Some(mcc) = Quartiles::of(rows.iter().filter_map(|r| r.overall_mcc)) else { continue };
            out.push(LevelSummary {
                factor,
                level,
                count: rows.len(),
                mcc,
                reliability_bias: Quartiles::of(rows.iter().filter_map(|r| r.reliability_bias)),
            });
        }
    }
    Ok(out)
}

/// Writes summaries as CSV with one row per factor level.
pub fn write_summary(path: &std::path::Path, rows: &[LevelSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "factor", "level", "count", "mcc_median", "mcc_q1", "mcc_q3", "mcc_iqr", "bias_median", "bias_q1", "bias_q3",
        "bias_iqr",
    ])?;
    let f = |x: f64| format!("{x:.6}");
    for r in rows {
        let b = r.reliability_bias.map_or_else(
            || vec![String::new(); 4],
            |q| vec![f(q.median), f(q.q1), f(q.q3), f(q.iqr)],
        );
        let mut row = vec![
            r.factor.as_str().to_string(),
            r.level.clone(),
            r.count.to_string(),
            f(r.mcc.median),
            f(r.mcc.q1),
            f(r.mcc.q3),
            f(r.mcc.iqr),
        ];
        row.extend(b);
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
