//! Labeled keyword corpora: manifest ingestion, the keyword-selection,
//! gender-balancing and keyword-speaker split protocols, gender-balanced
//! mini-batches, and a synthetic desk-scale corpus.

mod batches;
mod manifest;
mod protocol;
mod synth;
mod wav;

pub use batches::BalancedBatches;
pub use manifest::{load_manifest, load_manifest_with_keyword_selection, write_manifest};
pub use protocol::{gender_balance, select_keywords, split, SplitRatios, SplitReport, SplitStrategy, MAX_KEYWORDS};
pub use synth::{class_template, keyword_name, render_utterance, synth_dataset, SynthConfig, UtteranceParams};
pub use wav::{read_wav, write_wav};

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsp::{resample, AudioClip};
use crate::error::{Error, Result};
use crate::Executor;

/// Binary group attribute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Male,
    Female,
}

impl Group {
    pub const ALL: [Group; 2] = [Group::Male, Group::Female];

    pub fn as_str(&self) -> &'static str {
        match self {
            Group::Male => "male",
            Group::Female => "female",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Group {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" => Ok(Group::Male),
            "female" => Ok(Group::Female),
            other => Err(format!("unknown group {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
    #[default]
    Unassigned,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "validation" | "valid" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            "" | "unassigned" => Ok(Split::Unassigned),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub audio_path: PathBuf,
    pub keyword: String,
    pub class_index: usize,
    pub speaker_id: String,
    pub group: Group,
    pub split: Split,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub name: String,
    pub notes: Vec<String>,
    /// Manifest rows dropped for a group outside {male, female}.
    pub dropped_rows: usize,
    /// Keywords dropped by balancing for lacking one group.
    pub dropped_keywords: Vec<String>,
    pub split: Option<SplitReport>,
}

/// Immutable collection of utterances with a frozen keyword -> index map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    utterances: Vec<Utterance>,
    keywords: Vec<String>,
    index: HashMap<String, usize>,
    pub metadata: DatasetMetadata,
}

impl Dataset {
    /// Builds a dataset; `keywords[i]` is the keyword of class `i`.
    pub fn new(utterances: Vec<Utterance>, keywords: Vec<String>, metadata: DatasetMetadata) -> Result<Self> {
        if keywords.len() > MAX_KEYWORDS {
            return Err(Error::ManifestFormat(format!(
                "{} keyword classes exceed the limit of {MAX_KEYWORDS}; apply keyword selection",
                keywords.len()
            )));
        }
        let index: HashMap<String, usize> = keywords
            .iter()
            .enumerate()
            .map(|(i, k)| (k.clone(), i))
            .collect();
        if index.len() != keywords.len() {
            return Err(Error::ManifestFormat("duplicate keyword in keyword map".into()));
        }
        for u in &utterances {
            match index.get(&u.keyword) {
                Some(&i) if i == u.class_index => {}
                _ => {
                    return Err(Error::ManifestFormat(format!(
                        "utterance {} has keyword {:?} / class {} inconsistent with the keyword map",
                        u.audio_path.display(),
                        u.keyword,
                        u.class_index
                    )))
                }
            }
        }
        Ok(Self {
            utterances,
            keywords,
            index,
            metadata,
        })
    }

    /// Builds the keyword map in first-appearance order and assigns class indices.
    pub fn from_rows(rows: Vec<Utterance>, metadata: DatasetMetadata) -> Result<Self> {
        let mut keywords: Vec<String> = Vec::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        let mut utterances = rows;
        for u in &mut utterances {
            let next = keywords.len();
            let idx = *seen.entry(u.keyword.clone()).or_insert_with(|| {
                keywords.push(u.keyword.clone());
                next
            });
            u.class_index = idx;
        }
        Self::new(utterances, keywords, metadata)
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn keywords(&self) -> &[String] {
        &self.keywords
    }

    pub fn num_classes(&self) -> usize {
        self.keywords.len()
    }

    pub fn class_of(&self, keyword: &str) -> Option<usize> {
        self.index.get(keyword).copied()
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Indices of utterances assigned to `split`.
    pub fn indices_in(&self, split: Split) -> Vec<usize> {
        self.utterances
            .iter()
            .enumerate()
            .filter(|(_, u)| u.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn all_assigned(&self) -> bool {
        !self.utterances.is_empty() && self.utterances.iter().all(|u| u.split != Split::Unassigned)
    }

    pub fn count(&self, keyword: &str, group: Group) -> usize {
        self.utterances
            .iter()
            .filter(|u| u.keyword == keyword && u.group == group)
            .count()
    }

    pub(crate) fn with_utterances(&self, utterances: Vec<Utterance>, metadata: DatasetMetadata) -> Result<Self> {
        // drop classes that lost all utterances and reindex in map order
        let keep: Vec<String> = self
            .keywords
            .iter()
            .filter(|k| utterances.iter().any(|u| &u.keyword == *k))
            .cloned()
            .collect();
        let index: HashMap<&str, usize> = keep.iter().enumerate().map(|(i, k)| (k.as_str(), i)).collect();
        let utterances = utterances
            .into_iter()
            .map(|mut u| {
                u.class_index = index[u.keyword.as_str()];
                u
            })
            .collect();
        Self::new(utterances, keep, metadata)
    }

    /// Loads every referenced WAV, normalizing to 16 kHz or 8 kHz.
    /// Errors carry the 1-based manifest row.
    pub fn load_audio(&self, exec: &Executor) -> Result<Vec<AudioClip>> {
        exec.map(&self.utterances, |i, u| {
            let clip = read_wav(&u.audio_path).map_err(|e| match e {
                Error::Io { path, source, .. } => Error::Io {
                    path,
                    row: Some(i + 1),
                    source,
                },
                other => other,
            })?;
            normalize_rate(clip)
        })
        .into_iter()
        .collect()
    }
}

/// 8 kHz and 16 kHz pass through; integer multiples of 16 kHz (such as
/// 48 kHz) are decimated to 16 kHz.
pub fn normalize_rate(clip: AudioClip) -> Result<AudioClip> {
    match clip.sample_rate {
        8000 | 16000 => Ok(clip),
        r if r > 16000 && r % 16000 == 0 => resample(&clip, 16000),
        r => Err(Error::UnsupportedRate { from: r, to: 16000 }),
    }
}
