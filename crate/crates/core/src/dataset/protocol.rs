use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng, stream_seed};

use super::{Dataset, Group, Split, Utterance};

pub const MAX_KEYWORDS: usize = 35;

/// Ranks keywords by descending count (ties lexicographic), drops keywords
/// of three characters or fewer, keeps only the first keyword for each
/// three-letter prefix, and returns at most [`MAX_KEYWORDS`].
pub fn select_keywords<S: std::hash::BuildHasher>(counts: &HashMap<String, usize, S>) -> Vec<String> {
    let mut ranked: Vec<(&String, usize)> = counts.iter().map(|(k, &c)| (k, c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut prefixes: Vec<String> = Vec::new();
    let mut out = Vec::new();
    for (kw, _) in ranked {
        if kw.chars().count() <= 3 {
            continue;
        }
        let prefix: String = kw.chars().take(3).collect::<String>().to_lowercase();
        if prefixes.contains(&prefix) {
            continue;
        }
        prefixes.push(prefix);
        out.push(kw.clone());
        if out.len() == MAX_KEYWORDS {
            break;
        }
    }
    out
}

/// Equalizes per-keyword group counts: the minority group is kept whole and
/// the majority group is down-sampled uniformly at random. Keywords missing
/// a group are dropped and listed in `metadata.dropped_keywords`.
pub fn gender_balance(dataset: &Dataset, seed: u64) -> Result<Dataset> {
    let mut rng = rng(stream_seed(seed, "gender-balance"));
    let mut keep = vec![false; dataset.len()];
    let mut dropped = Vec::new();
    for kw in dataset.keywords() {
        let by_group = |g: Group| -> Vec<usize> {
            dataset
                .utterances()
                .iter()
                .enumerate()
                .filter(|(_, u)| &u.keyword == kw && u.group == g)
                .map(|(i, _)| i)
                .collect()
        };
        let (male, female) = (by_group(Group::Male), by_group(Group::Female));
        if male.is_empty() || female.is_empty() {
            dropped.push(kw.clone());
            continue;
        }
        let n = male.len().min(female.len());
        for pool in [&male, &female] {
            if pool.len() == n {
                pool.iter().for_each(|&i| keep[i] = true);
            } else {
                index::sample(&mut rng, pool.len(), n)
                    .into_iter()
                    .for_each(|j| keep[pool[j]] = true);
            }
        }
    }
    let utterances: Vec<Utterance> = dataset
        .utterances()
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(u, _)| u.clone())
        .collect();
    let mut meta = dataset.metadata.clone();
    if !dropped.is_empty() {
        meta.notes.push(format!(
            "gender balancing dropped {} keyword(s) lacking one group",
            dropped.len()
        ));
    }
    meta.dropped_keywords.extend(dropped);
    dataset.with_utterances(utterances, meta)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|r| !(0.0..=1.0).contains(r)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "split ratios {parts:?} must be in [0, 1] and sum to 1"
            )));
        }
        Ok(())
    }
}

/// How keyword-speaker pairs are pooled before assignment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitStrategy {
    /// All pairs in one pool.
    #[default]
    Pooled,
    /// One pool per keyword, so every split sees every keyword once the
    /// per-keyword pair count allows it.
    PerKeyword,
    /// The protocol is applied separately within every (keyword, group)
    /// stratum, so each split sees every keyword from both groups.
    PerKeywordGroup,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitReport {
    pub train_pairs: usize,
    pub validation_pairs: usize,
    pub test_pairs: usize,
    pub warnings: Vec<String>,
}

/// (class index, group) key of a split stratum; `None` pools both groups.
type Stratum = (usize, Option<Group>);
/// (keyword, speaker id).
type Pair = (String, String);

/// Assigns splits per unique (keyword, speaker) pair: `round(train * n)`
/// shuffled pairs go to train, `round(validation * n)` of the remaining
/// pairs to validation and the rest to test. Every utterance inherits its
/// pair's split.
pub fn split(dataset: &Dataset, ratios: SplitRatios, strategy: SplitStrategy, seed: u64) -> Result<Dataset> {
    ratios.validate()?;
    // pairs in first-appearance order, bucketed by stratum
    let mut strata: BTreeMap<Stratum, Vec<Pair>> = BTreeMap::new();
    let mut seen: HashMap<(&str, &str), ()> = HashMap::new();
    for u in dataset.utterances() {
        if seen.insert((&u.keyword, &u.speaker_id), ()).is_none() {
            let key = match strategy {
                SplitStrategy::Pooled => (0, None),
                SplitStrategy::PerKeyword => (u.class_index, None),
                SplitStrategy::PerKeywordGroup => (u.class_index, Some(u.group)),
            };
            strata
                .entry(key)
                .or_default()
                .push((u.keyword.clone(), u.speaker_id.clone()));
        }
    }
    if strata.is_empty() {
        return Err(Error::InsufficientData("no keyword-speaker pairs to split".into()));
    }

    let mut rng = rng(stream_seed(seed, "split"));
    let mut assignment: HashMap<(String, String), Split> = HashMap::new();
    let mut report = SplitReport::default();
    for ((class, group), mut pairs) in strata {
        let n = pairs.len();
        if n < 3 {
            let label = match (strategy, group) {
                (_, Some(g)) => format!("stratum ({}, {g})", dataset.keywords()[class]),
                (SplitStrategy::PerKeyword, None) => format!("keyword {}", dataset.keywords()[class]),
                _ => "dataset".into(),
            };
            return Err(Error::InsufficientData(format!(
                "{label} has {n} keyword-speaker pair(s); at least 3 are required"
            )));
        }
        pairs.shuffle(&mut rng);
        let n_train = ((ratios.train * n as f64).round() as usize).min(n);
        let n_val = ((ratios.validation * n as f64).round() as usize).min(n - n_train);
        for (i, pair) in pairs.into_iter().enumerate() {
            let s = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Validation
            } else {
                Split::Test
            };
            assignment.insert(pair, s);
        }
        report.train_pairs += n_train;
        report.validation_pairs += n_val;
        report.test_pairs += n - n_train - n_val;
    }
    for (count, name) in [
        (report.train_pairs, "train"),
        (report.validation_pairs, "validation"),
        (report.test_pairs, "test"),
    ] {
        if count == 0 {
            report.warnings.push(format!("{name} split is empty"));
        }
    }
    for split in [Split::Train, Split::Validation, Split::Test] {
        let present: HashSet<&str> =
            assignment.iter().filter(|(_, s)| **s == split).map(|((kw, _), _)| kw.as_str()).collect();
        let missing = dataset.keywords().iter().filter(|kw| !present.contains(kw.as_str())).count();
        if !present.is_empty() && missing > 0 {
            report.warnings.push(format!("{} split is missing {missing} keyword(s)", split.as_str()));
        }
    }

    let utterances = dataset
        .utterances()
        .iter()
        .map(|u| {
            let mut u = u.clone();
            u.split = assignment[&(u.keyword.clone(), u.speaker_id.clone())];
            u
        })
        .collect();
    let mut meta = dataset.metadata.clone();
    meta.notes.extend(report.warnings.iter().cloned());
    meta.split = Some(report);
    Dataset::new(utterances, dataset.keywords().to_vec(), meta)
}
