//! Layered TOML configuration: defaults, then a config file, then dotted
//! `key=value` overrides. The resolved configuration can be written back
//! as a snapshot that reloads to the same values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{gender_balance, split, Dataset, SplitRatios, SplitStrategy, SynthConfig};
use crate::dsp::FeatureConfig;
use crate::error::{Error, Result};
use crate::metrics::PerformanceMetric;
use crate::nn::{Architecture, TrainConfig};
use crate::pruning::PruneConfig;
use crate::rng::stream_seed;
use crate::selection::SelectionCriterion;
use crate::sweep::{BaselineRule, ExperimentGrid, GridConfig, SweepPlan};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub architecture: Architecture,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { architecture: Architecture::Cnn }
    }
}

/// How a manifest is turned into train, validation and test splits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    /// Keep only the keywords chosen by the keyword-selection protocol.
    pub keyword_selection: bool,
    pub gender_balance: bool,
    /// Re-split even when the manifest already assigns every utterance.
    pub resplit: bool,
    pub split_strategy: SplitStrategy,
    pub ratios: SplitRatios,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            keyword_selection: false,
            gender_balance: true,
            resplit: false,
            split_strategy: SplitStrategy::default(),
            ratios: SplitRatios::default(),
            seed: 0,
        }
    }
}

impl DataConfig {
    /// Balances groups (if enabled) and assigns splits unless the dataset
    /// already carries a complete assignment.
    pub fn prepare(&self, dataset: &Dataset) -> Result<Dataset> {
        let ds = if self.gender_balance { gender_balance(dataset, self.seed)? } else { dataset.clone() };
        if ds.all_assigned() && !self.resplit {
            Ok(ds)
        } else {
            split(&ds, self.ratios, self.split_strategy, self.seed)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub grid: GridConfig,
    /// Worker threads; 0 uses every core and 1 runs sequentially.
    pub parallelism: usize,
    pub run_pruning: bool,
    pub baselines: BaselineRule,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { grid: GridConfig::default(), parallelism: 0, run_pruning: true, baselines: BaselineRule::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    /// Root seed. Section seeds that are not set explicitly are derived
    /// from it.
    pub seed: u64,
    pub performance_metric: PerformanceMetric,
    pub features: FeatureConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub prune: PruneConfig,
    pub data: DataConfig,
    pub synth: SynthConfig,
    pub selection: SelectionCriterion,
    pub sweep: SweepConfig,
}

impl Default for Config {
    fn default() -> Self {
        let derived = |stream| derive_seed(0, stream);
        let mut sweep = SweepConfig::default();
        sweep.grid.global_seed = derived("sweep");
        Self {
            seed: 0,
            performance_metric: PerformanceMetric::default(),
            features: FeatureConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig { seed: derived("train"), ..TrainConfig::default() },
            prune: PruneConfig { seed: derived("prune"), ..PruneConfig::default() },
            data: DataConfig { seed: derived("split"), ..DataConfig::default() },
            synth: SynthConfig { seed: derived("synth"), ..SynthConfig::default() },
            selection: SelectionCriterion::default(),
            sweep,
        }
    }
}

/// Section seed derived from the root seed, kept within TOML's signed
/// 64-bit integer range.
fn derive_seed(root: u64, stream: &str) -> u64 {
    stream_seed(root, stream) & (i64::MAX as u64)
}

/// Where each derived section seed lives, and its stream label.
const SEEDED: [(&[&str], &str, &str); 5] = [
    (&["train"], "seed", "train"),
    (&["prune"], "seed", "prune"),
    (&["data"], "seed", "split"),
    (&["synth"], "seed", "synth"),
    (&["sweep", "grid"], "global_seed", "sweep"),
];

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::InvalidConfig(e.to_string())
}

/// Parses the right-hand side of an override as a TOML value, falling back
/// to a plain string (so `window=hann` works without quotes).
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn table_at<'a>(root: &'a mut toml::Table, path: &[&str], full: &str) -> Result<&'a mut toml::Table> {
    let mut t = root;
    for key in path {
        let entry = t.entry(key.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = entry
            .as_table_mut()
            .ok_or_else(|| Error::InvalidConfig(format!("{full}: {key} is not a table")))?;
    }
    Ok(t)
}

/// Applies one `a.b.c=value` override.
pub fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::InvalidConfig(format!("override {assignment:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::InvalidConfig(format!("override key {key:?} is malformed")));
    }
    let (last, path) = parts.split_last().expect("split yields at least one part");
    table_at(root, path, key)?.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

impl Config {
    /// Parses `text`, applies `overrides` in order, fills unset section
    /// seeds from the root seed and validates the result.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut root: toml::Table = toml::from_str(text).map_err(config_err)?;
        for o in overrides {
            apply_override(&mut root, o)?;
        }
        let seed = match root.get("seed") {
            None => 0,
            Some(toml::Value::Integer(i)) if *i >= 0 => *i as u64,
            Some(other) => return Err(Error::InvalidConfig(format!("seed must be a non-negative integer, got {other}"))),
        };
        for (path, key, stream) in SEEDED {
            let t = table_at(&mut root, path, key)?;
            if !t.contains_key(key) {
                t.insert(key.to_string(), toml::Value::Integer(derive_seed(seed, stream) as i64));
            }
        }
        let cfg: Config = root.try_into().map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `path` (or the defaults when `None`) with overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.train.validate()?;
        self.prune.validate()?;
        self.synth.validate()?;
        self.selection.validate()?;
        ExperimentGrid::from_config(&self.sweep.grid)?;
        Ok(())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(config_err)
    }

    /// Writes the resolved configuration next to a run's outputs.
    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?).map_err(|e| Error::io(path, e))
    }

    pub fn sweep_plan(&self) -> Result<SweepPlan> {
        Ok(SweepPlan {
            grid: ExperimentGrid::from_config(&self.sweep.grid)?,
            train: self.train.clone(),
            prune: self.prune.clone(),
            metric: self.performance_metric,
            baselines: self.sweep.baselines.clone(),
            run_pruning: self.sweep.run_pruning,
        })
    }
}
