use serde::{Deserialize, Serialize};

use crate::dataset::BalancedBatches;
use crate::error::{Error, Result};
use crate::metrics::{confusion_matrix, mcc};
use crate::rng::stream_seed;

use super::adam::{adam_step, AdamState};
use super::model::{build_model, ModelParams};
use super::spec::ModelSpec;
use super::LabeledFeatures;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_grid")]
    pub learning_rate_grid: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_epochs() -> usize {
    10
}

fn default_batch() -> usize {
    128
}

fn default_grid() -> Vec<f64> {
    vec![1e-2, 1e-3, 1e-4]
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: default_epochs(), batch_size: default_batch(), learning_rate_grid: default_grid(), seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size < 2 || !self.batch_size.is_multiple_of(2) {
            return Err(Error::InvalidConfig("batch_size must be even and >= 2".into()));
        }
        if self.learning_rate_grid.is_empty() {
            return Err(Error::InvalidConfig("learning_rate_grid is empty".into()));
        }
        if self.learning_rate_grid.iter().any(|lr| !(lr.is_finite() && *lr > 0.0)) {
            return Err(Error::InvalidConfig("learning rates must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's batches.
    pub loss: f64,
    pub validation_mcc: f64,
}

/// One training run at a fixed learning rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub learning_rate: f64,
    /// Training-set loss of the initialized model, before any update.
    pub initial_loss: Option<f64>,
    pub epochs: Vec<EpochRecord>,
    /// `ok` or `failed:<reason>`.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunHistory {
    pub fn final_validation_mcc(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.validation_mcc)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub runs: Vec<RunHistory>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub model: ModelParams,
    pub learning_rate: f64,
    pub history: TrainHistory,
}

/// Callbacks around each optimizer step.
pub(crate) trait StepHook {
    /// Called before the gradient is computed for global step `step`.
    fn before_step(&mut self, _step: usize, _params: &mut [Vec<f64>]) {}
    fn filter_grads(&self, _grads: &mut [Vec<f64>]) {}
    fn after_step(&mut self, _params: &mut [Vec<f64>]) {}
}

struct NoHook;
impl StepHook for NoHook {}

pub(crate) fn validation_mcc(model: &ModelParams, validation: &LabeledFeatures) -> Result<f64> {
    let preds = model.predict(&validation.refs())?;
    mcc(&confusion_matrix(&preds, &validation.labels, model.num_classes())?)
}

/// Runs `epochs` epochs of gender-balanced minibatch Adam on `model`,
/// starting from fresh optimizer state. Returns the per-epoch history and
/// the error that stopped training early, if any.
#[allow(clippy::too_many_arguments)]
pub(crate) fn fit(
    model: &mut ModelParams,
    train: &LabeledFeatures,
    validation: &LabeledFeatures,
    learning_rate: f64,
    epochs: usize,
    batch_size: usize,
    seed: u64,
    hook: &mut dyn StepHook,
) -> (Vec<EpochRecord>, Option<Error>) {
    let mut history = Vec::with_capacity(epochs);
    let batches = match BalancedBatches::new(&train.groups, batch_size, stream_seed(seed, "batches")) {
        Ok(b) => b,
        Err(e) => return (history, Some(e)),
    };
    let mut opt = AdamState::new(&model.tensors);
    let mut step = 0;
    for epoch in 0..epochs {
        let mut loss_sum = 0.0;
        let plan = batches.epoch(epoch);
        for idx in &plan {
            hook.before_step(step, &mut model.tensors);
            let xs: Vec<_> = idx.iter().map(|&i| &train.inputs[i]).collect();
            let ys: Vec<_> = idx.iter().map(|&i| train.labels[i]).collect();
            let (loss, mut grads) = match model.loss_and_grad(&xs, &ys) {
                Ok(r) => r,
                Err(e) => return (history, Some(e)),
            };
            hook.filter_grads(&mut grads);
            if let Err(e) = adam_step(&mut opt, &mut model.tensors, &grads, learning_rate) {
                return (history, Some(e));
            }
            hook.after_step(&mut model.tensors);
            if model.tensors.iter().flatten().any(|x| !x.is_finite()) {
                return (history, Some(Error::NumericalFailure(format!("non-finite weights after step {step}"))));
            }
            loss_sum += loss;
            step += 1;
        }
        let validation_mcc = match validation_mcc(model, validation) {
            Ok(m) => m,
            Err(e) => return (history, Some(e)),
        };
        history.push(EpochRecord { epoch, loss: loss_sum / plan.len() as f64, validation_mcc });
    }
    (history, None)
}

fn check_splits(spec: &ModelSpec, train: &LabeledFeatures, validation: &LabeledFeatures) -> Result<()> {
    if train.is_empty() || validation.is_empty() {
        return Err(Error::InsufficientData("training needs nonempty train and validation splits".into()));
    }
    for set in [train, validation] {
        if set.input_shape() != Some(spec.input_shape) {
            return Err(Error::Shape(format!(
                "features {:?} do not match model input {:?}",
                set.input_shape(),
                spec.input_shape
            )));
        }
        if let Some(&y) = set.labels.iter().find(|&&y| y >= spec.num_classes) {
            return Err(Error::Label(format!("label {y} outside 0..{}", spec.num_classes)));
        }
    }
    Ok(())
}

/// One training run at a single learning rate.
pub fn train_single(
    spec: &ModelSpec,
    train: &LabeledFeatures,
    validation: &LabeledFeatures,
    learning_rate: f64,
    config: &TrainConfig,
) -> (Result<ModelParams>, RunHistory) {
    let mut run = RunHistory { learning_rate, initial_loss: None, epochs: Vec::new(), status: "ok".into(), error: None };
    let result = (|| {
        check_splits(spec, train, validation)?;
        let mut model = build_model(spec, stream_seed(config.seed, "init"))?;
        run.initial_loss = model.loss(&train.refs(), &train.labels).ok();
        let (epochs, err) =
            fit(&mut model, train, validation, learning_rate, config.epochs, config.batch_size, config.seed, &mut NoHook);
        run.epochs = epochs;
        match err {
            Some(e) => Err(e),
            None => Ok(model),
        }
    })();
    if let Err(e) = &result {
        run.status = format!("failed:{}", e.kind());
        run.error = Some(e.to_string());
    }
    (result, run)
}

/// Trains once per learning rate in the grid and keeps the model with the
/// highest final validation MCC (earlier grid entries win ties). A run that
/// fails numerically is recorded and skipped.
pub fn train(
    spec: &ModelSpec,
    train: &LabeledFeatures,
    validation: &LabeledFeatures,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    spec.validate()?;
    check_splits(spec, train, validation)?;
    let mut history = TrainHistory::default();
    let mut best: Option<(ModelParams, f64, f64)> = None;
    for &lr in &config.learning_rate_grid {
        let (result, run) = train_single(spec, train, validation, lr, config);
        match result {
            Ok(model) => {
                let score = run.final_validation_mcc().unwrap_or(f64::NEG_INFINITY);
                if best.as_ref().is_none_or(|b| score > b.2) {
                    best = Some((model, lr, score));
                }
            }
            Err(Error::NumericalFailure(_)) => {}
            Err(e) => return Err(e),
        }
        history.runs.push(run);
    }
    match best {
        Some((model, learning_rate, _)) => Ok(TrainOutcome { model, learning_rate, history }),
        None => Err(Error::TrainingFailure(format!(
            "all {} learning rates diverged",
            config.learning_rate_grid.len()
        ))),
    }
}
