//! Classification metrics and the group reliability-bias measure.

mod bias;
mod report;

pub use bias::{group_bias, reliability_bias};
pub use report::{delta_report, evaluate, evaluate_predictions, BiasValue, DeltaReport, EvalReport, PerformanceMetric};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `K x K` counts; rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(num_classes: usize) -> Self {
        Self { counts: vec![vec![0; num_classes]; num_classes] }
    }

    /// Builds a matrix from nested rows; must be square.
    pub fn from_rows(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if counts.iter().any(|r| r.len() != k) {
            return Err(Error::Shape("confusion matrix must be square".into()));
        }
        Ok(Self { counts })
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|k| self.counts[k][k]).sum()
    }

    /// Support of each true class.
    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// Number of predictions of each class.
    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.num_classes()).map(|k| self.counts.iter().map(|r| r[k]).sum()).collect()
    }
}

pub fn confusion_matrix(predictions: &[usize], labels: &[usize], num_classes: usize) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::Label(format!(
            "{} predictions but {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::zeros(num_classes);
    for (&p, &t) in predictions.iter().zip(labels) {
        if p >= num_classes || t >= num_classes {
            return Err(Error::Label(format!("class {} outside 0..{num_classes}", p.max(t))));
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

fn nonempty(cm: &ConfusionMatrix) -> Result<f64> {
    match cm.total() {
        0 => Err(Error::UndefinedMetric("empty confusion matrix".into())),
        s => Ok(s as f64),
    }
}

/// Multiclass Matthews correlation coefficient. Zero when either
/// marginal has no variance.
pub fn mcc(cm: &ConfusionMatrix) -> Result<f64> {
    let s = nonempty(cm)?;
    let c = cm.trace() as f64;
    let p: Vec<f64> = cm.col_sums().into_iter().map(|x| x as f64).collect();
    let t: Vec<f64> = cm.row_sums().into_iter().map(|x| x as f64).collect();
    let pt: f64 = p.iter().zip(&t).map(|(a, b)| a * b).sum();
    let pp: f64 = p.iter().map(|a| a * a).sum();
    let tt: f64 = t.iter().map(|a| a * a).sum();
    let den = ((s * s - pp) * (s * s - tt)).sqrt();
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(((c * s - pt) / den).clamp(-1.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxMetrics {
    /// Macro-averaged; classes never predicted contribute 0.
    pub precision: f64,
    /// Macro-averaged; classes never present contribute 0.
    pub recall: f64,
    /// Per-class F1 weighted by true-class support.
    pub f1_weighted: f64,
    pub kappa: f64,
}

pub fn aux_metrics(cm: &ConfusionMatrix) -> Result<AuxMetrics> {
    let s = nonempty(cm)?;
    let k = cm.num_classes();
    let rows = cm.row_sums();
    let cols = cm.col_sums();
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let mut precision = 0.0;
    let mut recall = 0.0;
    let mut f1_weighted = 0.0;
    for i in 0..k {
        let p = ratio(cm.get(i, i), cols[i]);
        let r = ratio(cm.get(i, i), rows[i]);
        precision += p;
        recall += r;
        let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        f1_weighted += f1 * rows[i] as f64 / s;
    }
    let p_o = cm.trace() as f64 / s;
    let p_e: f64 = rows.iter().zip(&cols).map(|(&a, &b)| a as f64 * b as f64).sum::<f64>() / (s * s);
    let kappa = if p_e == 1.0 { 0.0 } else { (p_o - p_e) / (1.0 - p_e) };
    Ok(AuxMetrics { precision: precision / k as f64, recall: recall / k as f64, f1_weighted, kappa })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng;
    use proptest::prelude::*;
    use rand::Rng;

    /// Covariance form over one-hot indicator vectors, evaluated sample by
    /// sample without touching the confusion matrix.
    fn mcc_from_samples(preds: &[usize], labels: &[usize], k: usize) -> f64 {
        let n = preds.len() as f64;
        let onehot = |v: usize, j: usize| if v == j { 1.0 } else { 0.0 };
        let mean = |xs: &[usize], j: usize| xs.iter().map(|&v| onehot(v, j)).sum::<f64>() / n;
        let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
        for j in 0..k {
            let (mp, ml) = (mean(preds, j), mean(labels, j));
            for (&p, &l) in preds.iter().zip(labels) {
                let (dp, dl) = (onehot(p, j) - mp, onehot(l, j) - ml);
                xy += dp * dl;
                xx += dp * dp;
                yy += dl * dl;
            }
        }
        if xx == 0.0 || yy == 0.0 {
            0.0
        } else {
            xy / (xx * yy).sqrt()
        }
    }

    #[test]
    fn hand_case() {
        let cm = confusion_matrix(&[0, 0, 1, 1, 2, 1], &[0, 0, 1, 1, 2, 2], 3).unwrap();
        let m = mcc(&cm).unwrap();
        assert!((m - 18.0 / 528f64.sqrt()).abs() < 1e-15);
        assert!((m - 0.7833).abs() < 1e-4);
    }

    #[test]
    fn matches_sample_covariance_form() {
        let mut r = rng(2024);
        for _ in 0..1000 {
            let k = r.random_range(2..=10);
            let n = r.random_range(1..200);
            let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
            let preds: Vec<usize> = labels
                .iter()
                .map(|&l| if r.random_bool(0.6) { l } else { r.random_range(0..k) })
                .collect();
            let cm = confusion_matrix(&preds, &labels, k).unwrap();
            let a = mcc(&cm).unwrap();
            let b = mcc_from_samples(&preds, &labels, k);
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn binary_case_equals_phi_coefficient() {
        let (tp, tn, fp, fn_) = (37.0, 41.0, 9.0, 13.0);
        let cm = ConfusionMatrix::from_rows(vec![vec![41, 9], vec![13, 37]]).unwrap();
        let phi = (tp * tn - fp * fn_) / f64::sqrt((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_));
        assert!((mcc(&cm).unwrap() - phi).abs() < 1e-15);
    }

    #[test]
    fn confusion_matrix_basics() {
        let cm = confusion_matrix(&[1, 0], &[0, 1], 2).unwrap();
        assert_eq!(cm.rows(), &[vec![0, 1], vec![1, 0]]);
        assert_eq!(confusion_matrix(&[], &[], 3).unwrap(), ConfusionMatrix::zeros(3));
        let diag = confusion_matrix(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!(diag.trace(), 3);
        assert_eq!(mcc(&diag).unwrap(), 1.0);
        assert!(matches!(confusion_matrix(&[3], &[0], 3), Err(Error::Label(_))));
        assert!(matches!(mcc(&ConfusionMatrix::zeros(2)), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn constant_predictions_have_zero_mcc() {
        let cm = confusion_matrix(&[0, 0, 0, 0], &[0, 1, 0, 1], 2).unwrap();
        assert_eq!(mcc(&cm).unwrap(), 0.0);
    }

    #[test]
    fn aux_examples() {
        let perfect = confusion_matrix(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        let a = aux_metrics(&perfect).unwrap();
        assert_eq!((a.precision, a.recall, a.f1_weighted, a.kappa), (1.0, 1.0, 1.0, 1.0));

        let uniform = ConfusionMatrix::from_rows(vec![vec![25, 25], vec![25, 25]]).unwrap();
        assert_eq!(aux_metrics(&uniform).unwrap().kappa, 0.0);

        let collapse = confusion_matrix(&[0, 0, 0, 0], &[0, 1, 0, 1], 2).unwrap();
        assert_eq!(aux_metrics(&collapse).unwrap().recall, 0.5);
    }

    proptest! {
        #[test]
        fn mcc_is_bounded(labels in proptest::collection::vec(0usize..5, 1..60), seed in any::<u64>()) {
            let mut r = rng(seed);
            let preds: Vec<usize> = labels.iter().map(|_| r.random_range(0..5)).collect();
            let m = mcc(&confusion_matrix(&preds, &labels, 5).unwrap()).unwrap();
            prop_assert!((-1.0..=1.0).contains(&m));
        }

        #[test]
        fn permuted_perfect_matrix_recovers_one(
            labels in proptest::collection::vec(0usize..6, 1..60),
            perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle(),
        ) {
            // A classifier that outputs perm[label] is perfect once the
            // inverse permutation is applied to its predictions.
            let preds: Vec<usize> = labels.iter().map(|&l| perm[l]).collect();
            let mut inv = [0; 6];
            for (i, &p) in perm.iter().enumerate() {
                inv[p] = i;
            }
            let fixed: Vec<usize> = preds.iter().map(|&p| inv[p]).collect();
            let cm = confusion_matrix(&fixed, &labels, 6).unwrap();
            let distinct = labels.iter().collect::<std::collections::BTreeSet<_>>().len();
            let expect = if distinct > 1 { 1.0 } else { 0.0 };
            prop_assert!((mcc(&cm).unwrap() - expect).abs() < 1e-12);
        }

        #[test]
        fn order_independent(labels in proptest::collection::vec(0usize..4, 1..40), seed in any::<u64>()) {
            let mut r = rng(seed);
            let preds: Vec<usize> = labels.iter().map(|_| r.random_range(0..4)).collect();
            let a = confusion_matrix(&preds, &labels, 4).unwrap();
            let b = confusion_matrix(
                &preds.iter().rev().copied().collect::<Vec<_>>(),
                &labels.iter().rev().copied().collect::<Vec<_>>(),
                4,
            ).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
