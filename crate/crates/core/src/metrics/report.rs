use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::Group;
use crate::error::{Error, Result};
use crate::nn::{LabeledFeatures, ModelParams};

use super::{aux_metrics, confusion_matrix, group_bias, mcc, AuxMetrics, ConfusionMatrix};

/// Metric plugged into the bias measure. It must be positive for the
/// log-ratio to exist.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerformanceMetric {
    #[default]
    Mcc,
    Kappa,
    F1Weighted,
    Precision,
    Recall,
}

impl PerformanceMetric {
    pub fn compute(&self, cm: &ConfusionMatrix) -> Result<f64> {
        match self {
            PerformanceMetric::Mcc => mcc(cm),
            other => {
                let a = aux_metrics(cm)?;
                Ok(match other {
                    PerformanceMetric::Kappa => a.kappa,
                    PerformanceMetric::F1Weighted => a.f1_weighted,
                    PerformanceMetric::Precision => a.precision,
                    _ => a.recall,
                })
            }
        }
    }
}

/// A group bias, or the reason it is undefined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BiasValue {
    Value(f64),
    Undefined { error: String, performance: f64, overall: f64 },
}

impl BiasValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            BiasValue::Value(v) => Some(*v),
            BiasValue::Undefined { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(default)]
    pub id: String,
    pub performance_metric: PerformanceMetric,
    pub num_examples: usize,
    pub overall_mcc: f64,
    pub mcc_by_group: BTreeMap<Group, f64>,
    /// The configured metric, overall and per group (equal to the MCC
    /// fields when the metric is MCC).
    pub performance_overall: f64,
    pub performance_by_group: BTreeMap<Group, f64>,
    pub bias_by_group: BTreeMap<Group, BiasValue>,
    /// Sum of absolute group biases; `None` when any group bias is undefined.
    pub reliability_bias: Option<f64>,
    pub aux: AuxMetrics,
    pub aux_by_group: BTreeMap<Group, AuxMetrics>,
    pub confusion: ConfusionMatrix,
    pub confusion_by_group: BTreeMap<Group, ConfusionMatrix>,
}

impl EvalReport {
    /// The first undefined group bias, as an error.
    pub fn bias_error(&self) -> Option<Error> {
        self.bias_by_group.values().find_map(|b| match b {
            BiasValue::Undefined { performance, overall, .. } => {
                Some(Error::NonPositivePerformance { group: *performance, overall: *overall })
            }
            BiasValue::Value(_) => None,
        })
    }
}

/// Builds a report from predictions. Per-group metrics use the confusion
/// matrix restricted to that group's examples. Every group in
/// [`Group::ALL`] must be present.
pub fn evaluate_predictions(
    predictions: &[usize],
    labels: &[usize],
    groups: &[Group],
    num_classes: usize,
    metric: PerformanceMetric,
) -> Result<EvalReport> {
    if groups.len() != labels.len() {
        return Err(Error::Shape(format!("{} labels but {} groups", labels.len(), groups.len())));
    }
    let confusion = confusion_matrix(predictions, labels, num_classes)?;
    let mut confusion_by_group = BTreeMap::new();
    for g in Group::ALL {
        let idx: Vec<usize> = (0..groups.len()).filter(|&i| groups[i] == g).collect();
        if idx.is_empty() {
            return Err(Error::GroupCoverage(format!("no test examples for group {g}")));
        }
        let p: Vec<usize> = idx.iter().map(|&i| predictions[i]).collect();
        let l: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        confusion_by_group.insert(g, confusion_matrix(&p, &l, num_classes)?);
    }
    let overall_mcc = mcc(&confusion)?;
    let performance_overall = metric.compute(&confusion)?;
    let mut mcc_by_group = BTreeMap::new();
    let mut performance_by_group = BTreeMap::new();
    let mut aux_by_group = BTreeMap::new();
    let mut bias_by_group = BTreeMap::new();
    for (&g, cm) in &confusion_by_group {
        mcc_by_group.insert(g, mcc(cm)?);
        aux_by_group.insert(g, aux_metrics(cm)?);
        let perf = metric.compute(cm)?;
        performance_by_group.insert(g, perf);
        let b = match group_bias(perf, performance_overall) {
            Ok(v) => BiasValue::Value(v),
            Err(e) => BiasValue::Undefined { error: e.kind().to_string(), performance: perf, overall: performance_overall },
        };
        bias_by_group.insert(g, b);
    }
    let reliability_bias = bias_by_group
        .values()
        .map(|b| b.value().map(f64::abs))
        .sum::<Option<f64>>();
    Ok(EvalReport {
        id: String::new(),
        performance_metric: metric,
        num_examples: labels.len(),
        overall_mcc,
        mcc_by_group,
        performance_overall,
        performance_by_group,
        bias_by_group,
        reliability_bias,
        aux: aux_metrics(&confusion)?,
        aux_by_group,
        confusion,
        confusion_by_group,
    })
}

/// Runs `model` on the test features and reports overall and per-group
/// performance with argmax predictions.
pub fn evaluate(model: &ModelParams, test: &LabeledFeatures, metric: PerformanceMetric) -> Result<EvalReport> {
    let preds = model.predict(&test.refs())?;
    evaluate_predictions(&preds, &test.labels, &test.groups, model.num_classes(), metric)
}

/// Change from a baseline to a pruned model. Positive `delta_metric` is an
/// accuracy gain; negative `delta_reliability_bias` is a bias reduction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub baseline_id: String,
    pub pruned_id: String,
    pub delta_metric: f64,
    /// `None` when either report's reliability bias is undefined.
    pub delta_reliability_bias: Option<f64>,
    pub delta_metric_by_group: BTreeMap<Group, f64>,
}

pub fn delta_report(baseline: &EvalReport, pruned: &EvalReport) -> Result<DeltaReport> {
    if baseline.performance_metric != pruned.performance_metric {
        return Err(Error::Comparison("reports use different performance metrics".into()));
    }
    if !baseline.performance_by_group.keys().eq(pruned.performance_by_group.keys()) {
        return Err(Error::Comparison("reports cover different groups".into()));
    }
    if baseline.confusion.num_classes() != pruned.confusion.num_classes() {
        return Err(Error::Comparison("reports have different class counts".into()));
    }
    Ok(DeltaReport {
        baseline_id: baseline.id.clone(),
        pruned_id: pruned.id.clone(),
        delta_metric: pruned.performance_overall - baseline.performance_overall,
        delta_reliability_bias: pruned.reliability_bias.zip(baseline.reliability_bias).map(|(p, b)| p - b),
        delta_metric_by_group: baseline
            .performance_by_group
            .iter()
            .map(|(g, b)| (*g, pruned.performance_by_group[g] - b))
            .collect(),
    })
}
