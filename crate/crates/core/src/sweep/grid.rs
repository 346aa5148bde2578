//! Experiment grids and their expansion into ordered experiment lists.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dsp::{mfcc_serde, FeatureConfig, WindowFn, FRAME_LENGTHS_MS, FRAME_STEPS_PCT, MEL_BANKS, MFCC_COUNTS, SUPPORTED_RATES};
use crate::error::{Error, Result};
use crate::nn::Architecture;
use crate::pruning::{PruneConfig, Schedule, GRID_FREQUENCIES, GRID_LEARNING_RATES, GRID_SPARSITIES};
use crate::rng::{mix_seed, stream_seed};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Every design-choice value of the full study.
    #[serde(alias = "table1")]
    FullTable1,
    /// The reduced, recommended value set.
    #[serde(alias = "table9")]
    RecommendedTable9,
    #[default]
    Custom,
}

impl std::str::FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table1" | "full_table1" => Ok(Preset::FullTable1),
            "table9" | "recommended_table9" => Ok(Preset::RecommendedTable9),
            "custom" => Ok(Preset::Custom),
            other => Err(Error::InvalidConfig(format!("unknown preset {other:?}"))),
        }
    }
}

/// An MFCC count, where `None` means log-Mel features are used directly.
/// Written as an integer or `"none"` (0 is also read as none).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MfccCount(pub Option<usize>);

impl Serialize for MfccCount {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        mfcc_serde::serialize(&self.0, s)
    }
}

impl<'de> Deserialize<'de> for MfccCount {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        mfcc_serde::deserialize(d).map(MfccCount)
    }
}

impl std::fmt::Display for MfccCount {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.0 {
            Some(n) => write!(f, "{n}"),
            None => f.write_str("none"),
        }
    }
}

/// Pruning learning rates: an explicit list, or the rule that picks
/// `{1e-4, 1e-5}` for final sparsities up to 0.5 and `{1e-3}` above.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LearningRates {
    List(Vec<f64>),
    Rule(LearningRateRule),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearningRateRule {
    BySparsity,
}

impl LearningRates {
    pub fn for_sparsity(&self, sparsity: f64) -> Vec<f64> {
        match self {
            LearningRates::List(v) => v.clone(),
            LearningRates::Rule(LearningRateRule::BySparsity) => {
                if sparsity <= 0.5 {
                    vec![1e-4, 1e-5]
                } else {
                    vec![1e-3]
                }
            }
        }
    }
}

/// Axis values as written in a config file; unset axes take the preset's
/// values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub preset: Preset,
    #[serde(default)]
    pub global_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_rates: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub architectures: Option<Vec<Architecture>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_mel_banks: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_mfcc: Option<Vec<MfccCount>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_lengths_ms: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_steps_pct: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub windows: Option<Vec<WindowFn>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_sparsities: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pruning_frequencies: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pruning_schedules: Option<Vec<Schedule>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pruning_learning_rates: Option<LearningRates>,
}

/// Fully resolved axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub preset: Preset,
    pub global_seed: u64,
    pub sample_rates: Vec<u32>,
    pub architectures: Vec<Architecture>,
    pub num_mel_banks: Vec<usize>,
    pub num_mfcc: Vec<MfccCount>,
    pub frame_lengths_ms: Vec<u32>,
    pub frame_steps_pct: Vec<u32>,
    pub windows: Vec<WindowFn>,
    pub final_sparsities: Vec<f64>,
    pub pruning_frequencies: Vec<usize>,
    pub pruning_schedules: Vec<Schedule>,
    pub pruning_learning_rates: LearningRates,
}

impl ExperimentGrid {
    pub fn table1(global_seed: u64) -> Self {
        Self {
            preset: Preset::FullTable1,
            global_seed,
            sample_rates: SUPPORTED_RATES.to_vec(),
            architectures: Architecture::ALL.to_vec(),
            num_mel_banks: MEL_BANKS.to_vec(),
            num_mfcc: std::iter::once(MfccCount(None))
                .chain(MFCC_COUNTS.iter().map(|&n| MfccCount(Some(n))))
                .collect(),
            frame_lengths_ms: FRAME_LENGTHS_MS.to_vec(),
            frame_steps_pct: FRAME_STEPS_PCT.to_vec(),
            windows: vec![WindowFn::Hamming, WindowFn::Hann],
            final_sparsities: GRID_SPARSITIES.to_vec(),
            pruning_frequencies: GRID_FREQUENCIES.to_vec(),
            pruning_schedules: Schedule::ALL.to_vec(),
            pruning_learning_rates: LearningRates::List(GRID_LEARNING_RATES.to_vec()),
        }
    }

    /// The reduced grid. Sample rates and architectures default to both
    /// values; the final sparsity defaults to 0.5.
    pub fn table9(global_seed: u64) -> Self {
        Self {
            preset: Preset::RecommendedTable9,
            num_mel_banks: vec![20, 32],
            num_mfcc: vec![MfccCount(Some(10)), MfccCount(Some(11))],
            windows: vec![WindowFn::Hamming],
            final_sparsities: vec![0.5],
            pruning_frequencies: vec![10, 100],
            pruning_schedules: vec![Schedule::PolynomialDecay],
            pruning_learning_rates: LearningRates::Rule(LearningRateRule::BySparsity),
            ..Self::table1(global_seed)
        }
    }

    pub fn from_config(cfg: &GridConfig) -> Result<Self> {
        let base = match cfg.preset {
            Preset::FullTable1 => Self::table1(cfg.global_seed),
            Preset::RecommendedTable9 => Self::table9(cfg.global_seed),
            Preset::Custom => Self { preset: Preset::Custom, ..Self::table1(cfg.global_seed) },
        };
        let domain = base.clone();
        let grid = Self {
            preset: cfg.preset,
            global_seed: cfg.global_seed,
            sample_rates: cfg.sample_rates.clone().unwrap_or(base.sample_rates),
            architectures: cfg.architectures.clone().unwrap_or(base.architectures),
            num_mel_banks: cfg.num_mel_banks.clone().unwrap_or(base.num_mel_banks),
            num_mfcc: cfg.num_mfcc.clone().unwrap_or(base.num_mfcc),
            frame_lengths_ms: cfg.frame_lengths_ms.clone().unwrap_or(base.frame_lengths_ms),
            frame_steps_pct: cfg.frame_steps_pct.clone().unwrap_or(base.frame_steps_pct),
            windows: cfg.windows.clone().unwrap_or(base.windows),
            final_sparsities: cfg.final_sparsities.clone().unwrap_or(base.final_sparsities),
            pruning_frequencies: cfg.pruning_frequencies.clone().unwrap_or(base.pruning_frequencies),
            pruning_schedules: cfg.pruning_schedules.clone().unwrap_or(base.pruning_schedules),
            pruning_learning_rates: cfg.pruning_learning_rates.clone().unwrap_or(base.pruning_learning_rates),
        };
        grid.validate(&domain)?;
        Ok(grid)
    }

    /// Axes must be nonempty. Under a named preset every value must belong
    /// to that preset's domain, except sample rates, architectures and
    /// (for the reduced grid) final sparsities, which the application
    /// chooses from the full domain.
    fn validate(&self, preset_domain: &Self) -> Result<()> {
        fn check<T: PartialEq + std::fmt::Debug>(name: &str, values: &[T], domain: &[T], strict: bool) -> Result<()> {
            if values.is_empty() {
                return Err(Error::Grid(format!("axis {name} is empty")));
            }
            if strict {
                if let Some(v) = values.iter().find(|v| !domain.contains(v)) {
                    return Err(Error::Grid(format!("{name} value {v:?} is outside the preset domain {domain:?}")));
                }
            }
            Ok(())
        }
        let strict = self.preset != Preset::Custom;
        let full = Self::table1(0);
        let d = preset_domain;
        check("sample_rates", &self.sample_rates, &full.sample_rates, strict)?;
        check("architectures", &self.architectures, &full.architectures, strict)?;
        check("num_mel_banks", &self.num_mel_banks, &d.num_mel_banks, strict)?;
        check("num_mfcc", &self.num_mfcc, &d.num_mfcc, strict)?;
        check("frame_lengths_ms", &self.frame_lengths_ms, &d.frame_lengths_ms, strict)?;
        check("frame_steps_pct", &self.frame_steps_pct, &d.frame_steps_pct, strict)?;
        check("windows", &self.windows, &d.windows, strict)?;
        let sparsity_domain = if self.preset == Preset::RecommendedTable9 { &full } else { d };
        check("final_sparsities", &self.final_sparsities, &sparsity_domain.final_sparsities, strict)?;
        check("pruning_frequencies", &self.pruning_frequencies, &d.pruning_frequencies, strict)?;
        check("pruning_schedules", &self.pruning_schedules, &d.pruning_schedules, strict)?;
        if let LearningRates::List(v) = &self.pruning_learning_rates {
            check("pruning_learning_rates", v, &GRID_LEARNING_RATES, strict)?;
            if v.iter().any(|lr| !(lr.is_finite() && *lr > 0.0)) {
                return Err(Error::Grid("pruning learning rates must be positive".into()));
            }
        } else if self.preset == Preset::FullTable1 {
            return Err(Error::Grid("the full grid uses an explicit pruning learning-rate list".into()));
        }
        if self.final_sparsities.iter().any(|s| !(0.0..1.0).contains(s)) {
            return Err(Error::Grid("final sparsities must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Number of training experiments.
    pub fn training_size(&self) -> usize {
        self.sample_rates.len()
            * self.architectures.len()
            * self.num_mel_banks.len()
            * self.num_mfcc.len()
            * self.frame_lengths_ms.len()
            * self.frame_steps_pct.len()
            * self.windows.len()
    }

    /// Number of pruning runs per baseline.
    pub fn pruning_size(&self) -> usize {
        self.pruning_points(0).len()
    }

    /// Pruning configurations applied to each baseline, in order
    /// (final sparsity, frequency, schedule, learning rate). `template`
    /// supplies epochs, batch size and initial sparsity.
    pub fn pruning_points_with(&self, template: &PruneConfig) -> Vec<PruneConfig> {
        let mut out = Vec::new();
        for &s in &self.final_sparsities {
            for &frequency in &self.pruning_frequencies {
                for &schedule in &self.pruning_schedules {
                    for lr in self.pruning_learning_rates.for_sparsity(s) {
                        out.push(PruneConfig {
                            final_sparsity: s,
                            schedule,
                            frequency,
                            pruning_learning_rate: lr,
                            initial_sparsity: template.initial_sparsity.min(s),
                            ..template.clone()
                        });
                    }
                }
            }
        }
        out
    }

    fn pruning_points(&self, seed: u64) -> Vec<PruneConfig> {
        self.pruning_points_with(&PruneConfig { seed, ..PruneConfig::default() })
    }
}

/// One training experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingPoint {
    pub index: usize,
    pub id: String,
    pub seed: u64,
    pub architecture: Architecture,
    pub features: FeatureConfig,
}

/// Per-experiment seed: splitmix64 finalizer over the global seed advanced
/// by `index + 1` golden-ratio increments. Distinct for distinct indices.
pub fn experiment_seed(global_seed: u64, index: usize) -> u64 {
    mix_seed(global_seed, index as u64)
}

/// Seed of the `index`-th pruning run.
pub fn pruning_seed(global_seed: u64, index: usize) -> u64 {
    mix_seed(stream_seed(global_seed, "prune"), index as u64)
}

pub fn training_id(index: usize) -> String {
    format!("t{index:05}")
}

pub fn pruning_id(index: usize) -> String {
    format!("p{index:05}")
}

/// Cartesian product of the training axes. Axis order, slowest first:
/// sample rate, architecture, Mel banks, MFCC count, frame length, frame
/// step, window.
pub fn expand_grid(grid: &ExperimentGrid) -> Result<Vec<TrainingPoint>> {
    grid.validate(&ExperimentGrid { preset: Preset::Custom, ..grid.clone() })?;
    let mut out = Vec::with_capacity(grid.training_size());
    for &rate in &grid.sample_rates {
        for &architecture in &grid.architectures {
            for &mel in &grid.num_mel_banks {
                for &mfcc in &grid.num_mfcc {
                    for &fl in &grid.frame_lengths_ms {
                        for &step in &grid.frame_steps_pct {
                            for &window in &grid.windows {
                                let index = out.len();
                                out.push(TrainingPoint {
                                    index,
                                    id: training_id(index),
                                    seed: experiment_seed(grid.global_seed, index),
                                    architecture,
                                    features: FeatureConfig::new(rate, mel, mfcc.0, fl, step, window),
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}
