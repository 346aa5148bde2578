//! Small convolutional classifiers trained from scratch.
//!
//! Two architectures are provided: [`Architecture::Cnn`] (two convolutions,
//! one dense hidden layer) and [`Architecture::LlCnn`] (one convolution, two
//! dense hidden layers). All arithmetic is `f64`; training is sequential and
//! bit-reproducible for a given seed.

mod adam;
mod checkpoint;
mod layers;
mod model;
mod spec;
mod train;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use layers::{Layer, LayerSpec, Network, TensorInfo};
pub use model::{argmax, build_model, loss_and_grad_raw, softmax, Logits, ModelParams};
pub use spec::{Architecture, ConvHyper, ModelSpec};
pub use train::{train, train_single, EpochRecord, RunHistory, TrainConfig, TrainHistory, TrainOutcome};
pub(crate) use train::{fit, StepHook};

use crate::dataset::Group;
use crate::dsp::FeatureMatrix;
use crate::error::{Error, Result};

/// Feature matrices with class labels and group attributes, index-aligned.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabeledFeatures {
    pub inputs: Vec<FeatureMatrix>,
    pub labels: Vec<usize>,
    pub groups: Vec<Group>,
}

impl LabeledFeatures {
    pub fn new(inputs: Vec<FeatureMatrix>, labels: Vec<usize>, groups: Vec<Group>) -> Result<Self> {
        if inputs.len() != labels.len() || inputs.len() != groups.len() {
            return Err(Error::Shape(format!(
                "{} inputs, {} labels, {} groups",
                inputs.len(),
                labels.len(),
                groups.len()
            )));
        }
        if let Some(first) = inputs.first() {
            if inputs.iter().any(|x| x.shape() != first.shape()) {
                return Err(Error::Shape("feature matrices differ in shape".into()));
            }
        }
        Ok(Self { inputs, labels, groups })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_shape(&self) -> Option<(usize, usize)> {
        self.inputs.first().map(FeatureMatrix::shape)
    }

    pub fn refs(&self) -> Vec<&FeatureMatrix> {
        self.inputs.iter().collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            inputs: indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            groups: indices.iter().map(|&i| self.groups[i]).collect(),
        }
    }
}
