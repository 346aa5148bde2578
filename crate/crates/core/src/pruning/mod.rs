//! Magnitude pruning as a fine-tuning phase.
//!
//! Each weight tensor is ranked separately by absolute value; bias vectors
//! are never pruned. The target sparsity follows a constant or cubic
//! polynomial-decay schedule and is re-applied every `frequency` optimizer
//! steps, with a final pruning event once training ends.

mod schedule;

pub use schedule::{sparsity_at_step, Schedule};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{fit, EpochRecord, LabeledFeatures, ModelParams, StepHook, TensorInfo};

/// Final sparsities of the full grid.
pub const GRID_SPARSITIES: [f64; 6] = [0.2, 0.5, 0.75, 0.8, 0.85, 0.9];
pub const GRID_FREQUENCIES: [usize; 2] = [10, 100];
pub const GRID_LEARNING_RATES: [f64; 3] = [1e-3, 1e-4, 1e-5];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PruneConfig {
    pub final_sparsity: f64,
    #[serde(default)]
    pub schedule: Schedule,
    /// Optimizer steps between pruning events.
    pub frequency: usize,
    pub pruning_learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub initial_sparsity: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_epochs() -> usize {
    10
}

fn default_batch() -> usize {
    128
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            final_sparsity: 0.5,
            schedule: Schedule::default(),
            frequency: 10,
            pruning_learning_rate: 1e-4,
            epochs: default_epochs(),
            initial_sparsity: 0.0,
            batch_size: default_batch(),
            seed: 0,
        }
    }
}

impl PruneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(0.0..1.0).contains(&self.final_sparsity) {
            return bad("final_sparsity must be in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.initial_sparsity) || self.initial_sparsity > self.final_sparsity {
            return bad("initial_sparsity must be in [0, final_sparsity]");
        }
        if self.frequency == 0 {
            return bad("frequency must be >= 1");
        }
        if !(self.pruning_learning_rate.is_finite() && self.pruning_learning_rate > 0.0) {
            return bad("pruning_learning_rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.batch_size < 2 || !self.batch_size.is_multiple_of(2) {
            return bad("batch_size must be even and >= 2");
        }
        Ok(())
    }

    /// Checks the values against the full experiment grid.
    pub fn validate_grid(&self) -> Result<()> {
        self.validate()?;
        if !GRID_SPARSITIES.contains(&self.final_sparsity)
            || !GRID_FREQUENCIES.contains(&self.frequency)
            || !GRID_LEARNING_RATES.contains(&self.pruning_learning_rate)
        {
            return Err(Error::InvalidConfig(format!(
                "({}, {}, {}) is outside the grid domains",
                self.final_sparsity, self.frequency, self.pruning_learning_rate
            )));
        }
        Ok(())
    }
}

/// Number of entries pruned from a tensor of `n` weights at `sparsity`.
pub fn pruned_count(sparsity: f64, n: usize) -> usize {
    ((sparsity * n as f64 + 0.5).floor() as usize).min(n)
}

/// Keep-mask for one tensor: the `pruned_count` smallest magnitudes are
/// dropped, lower flat indices first among equal magnitudes.
pub fn apply_magnitude_mask(weights: &[f64], sparsity: f64) -> Vec<bool> {
    let k = pruned_count(sparsity, weights.len());
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| weights[a].abs().total_cmp(&weights[b].abs()).then(a.cmp(&b)));
    let mut keep = vec![true; weights.len()];
    for &i in &order[..k] {
        keep[i] = false;
    }
    keep
}

/// Keep-masks for every weight tensor of a model, in declaration order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PruneMask {
    masks: Vec<Vec<bool>>,
    /// Position of each weight tensor in the model's tensor list.
    slots: Vec<usize>,
}

impl PruneMask {
    pub fn ones(infos: &[TensorInfo]) -> Self {
        let slots: Vec<usize> = (0..infos.len()).filter(|&i| infos[i].is_weight).collect();
        let masks = slots.iter().map(|&i| vec![true; infos[i].len()]).collect();
        Self { masks, slots }
    }

    /// Magnitude masks at `sparsity` for each weight tensor of `tensors`.
    pub fn from_magnitudes(infos: &[TensorInfo], tensors: &[Vec<f64>], sparsity: f64) -> Self {
        let mut m = Self::ones(infos);
        for (mask, &slot) in m.masks.iter_mut().zip(&m.slots) {
            *mask = apply_magnitude_mask(&tensors[slot], sparsity);
        }
        m
    }

    pub fn from_masks(infos: &[TensorInfo], masks: Vec<Vec<bool>>) -> Result<Self> {
        let ones = Self::ones(infos);
        if masks.len() != ones.masks.len() || masks.iter().zip(&ones.masks).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::Shape("mask shapes do not match weight tensors".into()));
        }
        Ok(Self { masks, slots: ones.slots })
    }

    pub fn masks(&self) -> &[Vec<bool>] {
        &self.masks
    }

    pub fn into_masks(self) -> Vec<Vec<bool>> {
        self.masks
    }

    /// Zeroes masked entries of the weight tensors in `tensors`.
    pub fn apply(&self, tensors: &mut [Vec<f64>]) {
        for (mask, &slot) in self.masks.iter().zip(&self.slots) {
            for (w, &keep) in tensors[slot].iter_mut().zip(mask) {
                if !keep {
                    *w = 0.0;
                }
            }
        }
    }

    /// Fraction of masked entries in each weight tensor.
    pub fn sparsities(&self) -> Vec<f64> {
        self.masks.iter().map(|m| m.iter().filter(|&&k| !k).count() as f64 / m.len() as f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneEvent {
    pub step: usize,
    pub target_sparsity: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PruneHistory {
    pub epochs: Vec<EpochRecord>,
    pub events: Vec<PruneEvent>,
    pub total_steps: usize,
    /// Step of the last pruning event, where the schedule reaches its end.
    pub schedule_end: usize,
}

/// Step of the last pruning event in a run of `total_steps` steps.
pub fn schedule_end(total_steps: usize, frequency: usize) -> usize {
    total_steps.saturating_sub(1) / frequency * frequency
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorSparsity {
    pub name: String,
    pub size: usize,
    pub zeros: usize,
    pub sparsity: f64,
}

/// Achieved sparsity of each weight tensor, as written next to pruned
/// checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsitySummary {
    pub target_sparsity: f64,
    pub tensors: Vec<TensorSparsity>,
    /// Zero weights over all weight tensors.
    pub overall: f64,
}

pub fn sparsity_summary(model: &ModelParams, target_sparsity: f64) -> SparsitySummary {
    let tensors: Vec<TensorSparsity> = model
        .tensor_info()
        .iter()
        .zip(&model.tensors)
        .filter(|(info, _)| info.is_weight)
        .map(|(info, w)| {
            let zeros = w.iter().filter(|&&x| x == 0.0).count();
            TensorSparsity { name: info.name.clone(), size: w.len(), zeros, sparsity: zeros as f64 / w.len() as f64 }
        })
        .collect();
    let size: usize = tensors.iter().map(|t| t.size).sum();
    let zeros: usize = tensors.iter().map(|t| t.zeros).sum();
    SparsitySummary { target_sparsity, tensors, overall: zeros as f64 / size as f64 }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PruneOutcome {
    pub model: ModelParams,
    pub mask: PruneMask,
    pub history: PruneHistory,
}

struct Pruner<'a> {
    config: &'a PruneConfig,
    infos: Vec<TensorInfo>,
    mask: PruneMask,
    end: usize,
    events: Vec<PruneEvent>,
    error: Option<Error>,
}

impl Pruner<'_> {
    fn target(&self, step: usize) -> Result<f64> {
        if self.end == 0 {
            // A single event at step 0: prune straight to the final target.
            Ok(self.config.final_sparsity)
        } else {
            sparsity_at_step(self.config, step, self.end)
        }
    }

    fn prune(&mut self, step: usize, params: &mut [Vec<f64>]) {
        match self.target(step) {
            Ok(s) => {
                self.mask = PruneMask::from_magnitudes(&self.infos, params, s);
                self.mask.apply(params);
                self.events.push(PruneEvent { step, target_sparsity: s });
            }
            Err(e) => self.error = Some(e),
        }
    }
}

impl StepHook for Pruner<'_> {
    fn before_step(&mut self, step: usize, params: &mut [Vec<f64>]) {
        if step.is_multiple_of(self.config.frequency) && step <= self.end {
            self.prune(step, params);
        }
    }

    fn filter_grads(&self, grads: &mut [Vec<f64>]) {
        self.mask.apply(grads);
    }

    fn after_step(&mut self, params: &mut [Vec<f64>]) {
        self.mask.apply(params);
    }
}

/// Fine-tunes a copy of `baseline` with fresh Adam state while pruning it
/// to `config.final_sparsity`. Gradients of pruned weights are zeroed and
/// the mask is re-applied after every update.
pub fn prune_train(
    baseline: &ModelParams,
    config: &PruneConfig,
    train: &LabeledFeatures,
    validation: &LabeledFeatures,
) -> Result<PruneOutcome> {
    config.validate()?;
    if train.is_empty() || validation.is_empty() {
        return Err(Error::InsufficientData("pruning needs nonempty train and validation splits".into()));
    }
    let batches = crate::dataset::BalancedBatches::new(&train.groups, config.batch_size, 0)?;
    let total_steps = batches.batches_per_epoch() * config.epochs;
    let infos = baseline.tensor_info();
    let mut pruner = Pruner {
        config,
        mask: PruneMask::ones(&infos),
        infos,
        end: schedule_end(total_steps, config.frequency),
        events: Vec::new(),
        error: None,
    };
    let mut model = baseline.clone();
    let (epochs, err) = fit(
        &mut model,
        train,
        validation,
        config.pruning_learning_rate,
        config.epochs,
        config.batch_size,
        config.seed,
        &mut pruner,
    );
    let history = PruneHistory { epochs, events: pruner.events, total_steps, schedule_end: pruner.end };
    if let Some(e) = err.or(pruner.error) {
        return Err(Error::PruningFailure { reason: e.to_string(), history: Box::new(history) });
    }
    Ok(PruneOutcome { model, mask: pruner.mask, history })
}
