//! Dataset-to-features plumbing shared by the CLI and the sweep harness.

use crate::dataset::{Dataset, Split};
use crate::dsp::{resample_to, AudioClip, FeatureConfig, FeatureExtractor, FeatureMatrix};
use crate::error::Result;
use crate::nn::LabeledFeatures;
use crate::Executor;

/// Features for the three splits of a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitFeatures {
    pub train: LabeledFeatures,
    pub validation: LabeledFeatures,
    pub test: LabeledFeatures,
}

impl SplitFeatures {
    pub fn input_shape(&self) -> Option<(usize, usize)> {
        self.train.input_shape()
    }
}

/// Resamples each clip to the configured rate and extracts features.
pub fn featurize_clips(clips: &[AudioClip], config: &FeatureConfig, exec: &Executor) -> Result<Vec<FeatureMatrix>> {
    let extractor = FeatureExtractor::new(config)?;
    exec.map(clips, |_, clip| extractor.extract(resample_to(clip, config.sample_rate)?.as_ref()))
        .into_iter()
        .collect()
}

/// Featurizes `clips` (aligned with the dataset's utterances) and groups
/// them by split. Unassigned utterances are ignored.
pub fn featurize_splits(
    dataset: &Dataset,
    clips: &[AudioClip],
    config: &FeatureConfig,
    exec: &Executor,
) -> Result<SplitFeatures> {
    let features = featurize_clips(clips, config, exec)?;
    let part = |split: Split| -> Result<LabeledFeatures> {
        let idx = dataset.indices_in(split);
        let utts = dataset.utterances();
        LabeledFeatures::new(
            idx.iter().map(|&i| features[i].clone()).collect(),
            idx.iter().map(|&i| utts[i].class_index).collect(),
            idx.iter().map(|&i| utts[i].group).collect(),
        )
    };
    Ok(SplitFeatures { train: part(Split::Train)?, validation: part(Split::Validation)?, test: part(Split::Test)? })
}
