//! Post-hoc model selection trading accuracy against reliability bias.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::EvalReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionKind {
    /// Highest MCC.
    HighAccuracy,
    /// Lowest reliability bias.
    LowBias,
    /// Lowest reliability bias among models within a relative tolerance of
    /// the best MCC.
    LowBiasHighAccuracy,
}

impl CriterionKind {
    pub const ALL: [CriterionKind; 3] =
        [CriterionKind::HighAccuracy, CriterionKind::LowBias, CriterionKind::LowBiasHighAccuracy];

    pub fn as_str(&self) -> &'static str {
        match self {
            CriterionKind::HighAccuracy => "high_accuracy",
            CriterionKind::LowBias => "low_bias",
            CriterionKind::LowBiasHighAccuracy => "low_bias_high_accuracy",
        }
    }
}

impl std::str::FromStr for CriterionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown criterion {s:?}")))
    }
}

impl std::fmt::Display for CriterionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const DEFAULT_TOLERANCE: f64 = 0.015;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionCriterion {
    pub kind: CriterionKind,
    #[serde(default = "default_tolerance")]
    pub accuracy_tolerance: f64,
    /// How many models to return.
    #[serde(default = "default_m")]
    pub m: usize,
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

fn default_m() -> usize {
    1
}

impl Default for SelectionCriterion {
    fn default() -> Self {
        Self::new(CriterionKind::HighAccuracy)
    }
}

impl SelectionCriterion {
    pub fn new(kind: CriterionKind) -> Self {
        Self { kind, accuracy_tolerance: DEFAULT_TOLERANCE, m: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.accuracy_tolerance) {
            return Err(Error::InvalidConfig("accuracy_tolerance must be in [0, 1)".into()));
        }
        if self.m == 0 {
            return Err(Error::InvalidConfig("m must be >= 1".into()));
        }
        Ok(())
    }
}

/// Anything with an MCC and a reliability bias.
pub trait Scored {
    fn mcc(&self) -> f64;
    fn reliability_bias(&self) -> f64;
}

impl Scored for EvalReport {
    fn mcc(&self) -> f64 {
        self.overall_mcc
    }

    /// Undefined bias maps to NaN, which [`select`] rejects.
    fn reliability_bias(&self) -> f64 {
        self.reliability_bias.unwrap_or(f64::NAN)
    }
}

impl Scored for (f64, f64) {
    fn mcc(&self) -> f64 {
        self.0
    }

    fn reliability_bias(&self) -> f64 {
        self.1
    }
}

impl<T: Scored> Scored for &T {
    fn mcc(&self) -> f64 {
        (*self).mcc()
    }

    fn reliability_bias(&self) -> f64 {
        (*self).reliability_bias()
    }
}

/// MCC a candidate must reach to qualify under `low_bias_high_accuracy`.
pub fn accuracy_threshold<T: Scored>(candidates: &[T], tolerance: f64) -> f64 {
    let best = candidates.iter().map(Scored::mcc).fold(f64::NEG_INFINITY, f64::max);
    (1.0 - tolerance) * best
}

/// Indices of the selected candidates, best first, at most `m` of them.
///
/// Ties are broken by higher MCC and then by input position.
pub fn select<T: Scored>(candidates: &[T], criterion: &SelectionCriterion) -> Result<Vec<usize>> {
    criterion.validate()?;
    if candidates.is_empty() {
        return Err(Error::Selection("no candidates".into()));
    }
    if let Some(i) = candidates.iter().position(|c| !c.mcc().is_finite() || !c.reliability_bias().is_finite()) {
        return Err(Error::Selection(format!("candidate {i} has a non-finite MCC or reliability bias")));
    }
    let by_mcc = |a: &usize, b: &usize| candidates[*b].mcc().total_cmp(&candidates[*a].mcc());
    let by_bias = |a: &usize, b: &usize| {
        candidates[*a].reliability_bias().total_cmp(&candidates[*b].reliability_bias())
    };
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    match criterion.kind {
        CriterionKind::HighAccuracy => order.sort_by(by_mcc),
        CriterionKind::LowBias => order.sort_by(|a, b| by_bias(a, b).then_with(|| by_mcc(a, b))),
        CriterionKind::LowBiasHighAccuracy => {
            let threshold = accuracy_threshold(candidates, criterion.accuracy_tolerance);
            order.retain(|&i| candidates[i].mcc() >= threshold);
            order.sort_by(|a, b| match by_bias(a, b) {
                Ordering::Equal => by_mcc(a, b),
                o => o,
            });
        }
    }
    order.truncate(criterion.m);
    Ok(order)
}
