//! Evaluation metrics: accuracy, F1, MCC, Spearman's ρ and protein-centric Fmax.

use std::fmt;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        ConfusionCounts { tp, tn, fp, fn_ }
    }

    pub fn from_binary(predicted: &[bool], actual: &[bool]) -> Self {
        let mut cc = ConfusionCounts::default();
        for (&p, &a) in predicted.iter().zip(actual) {
            match (p, a) {
                (true, true) => cc.tp += 1,
                (false, false) => cc.tn += 1,
                (true, false) => cc.fp += 1,
                (false, true) => cc.fn_ += 1,
            }
        }
        cc
    }

    /// One-vs-rest counts for `class` over multi-class predictions.
    pub fn one_vs_rest(predicted: &[usize], actual: &[usize], class: usize) -> Self {
        let p: Vec<bool> = predicted.iter().map(|&c| c == class).collect();
        let a: Vec<bool> = actual.iter().map(|&c| c == class).collect();
        Self::from_binary(&p, &a)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

pub fn accuracy(cc: &ConfusionCounts) -> Result<f64> {
    let total = cc.total();
    if total == 0 {
        return Err(Error::EmptySequence("accuracy over an empty evaluation set".into()));
    }
    Ok((cc.tn + cc.tp) as f64 / total as f64)
}

/// `2TP / (2TP + FP + FN)`, zero when the denominator vanishes.
pub fn f1(cc: &ConfusionCounts) -> f64 {
    let denom = 2 * cc.tp + cc.fp + cc.fn_;
    if denom == 0 {
        return 0.0;
    }
    (2 * cc.tp) as f64 / denom as f64
}

/// Matthews correlation; zero if any marginal is empty.
pub fn mcc(cc: &ConfusionCounts) -> f64 {
    let (tp, tn, fp, fn_) = (cc.tp as u128, cc.tn as u128, cc.fp as u128, cc.fn_ as u128);
    let num = (tp * tn) as i128 - (fp * fn_) as i128;
    let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
    if factors.contains(&0) {
        return 0.0;
    }
    let denom = (factors[0] as f64 * factors[1] as f64 * factors[2] as f64 * factors[3] as f64).sqrt();
    (num as f64 / denom).clamp(-1.0, 1.0)
}

/// Exact-match rate of predicted vs true class indices.
pub fn multiclass_accuracy(predicted: &[usize], actual: &[usize]) -> Result<f64> {
    if predicted.is_empty() || predicted.len() != actual.len() {
        return Err(Error::EmptySequence(format!(
            "accuracy over {} predictions and {} labels",
            predicted.len(),
            actual.len()
        )));
    }
    let hits = predicted.iter().zip(actual).filter(|(p, a)| p == a).count();
    Ok(hits as f64 / predicted.len() as f64)
}

/// 1-based ranks, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn has_ties(ranks: &[f64]) -> bool {
    ranks.iter().any(|r| r.fract() != 0.0) || {
        let mut seen: Vec<f64> = ranks.to_vec();
        seen.sort_by(f64::total_cmp);
        seen.windows(2).any(|w| w[0] == w[1])
    }
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Spearman's ρ. Without ties this is `1 − 6Σd²/(n(n²−1))`; with ties it is
/// the Pearson correlation of the average ranks.
pub fn spearman(preds: &[f64], targets: &[f64]) -> Result<f64> {
    if preds.len() != targets.len() {
        return Err(Error::Shape {
            op: "spearman",
            left: (preds.len(), 1),
            right: (targets.len(), 1),
        });
    }
    let n = preds.len();
    if n < 2 {
        return Err(Error::EmptySequence(format!("spearman needs n >= 2, got {n}")));
    }
    for (name, v) in [("predictions", preds), ("targets", targets)] {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Contract(format!("non-finite {name}")));
        }
        if v.iter().all(|&x| x == v[0]) {
            return Err(Error::Contract(format!("constant {name}: rank correlation undefined")));
        }
    }
    let (rp, rt) = (average_ranks(preds), average_ranks(targets));
    if has_ties(&rp) || has_ties(&rt) {
        return Ok(pearson(&rp, &rt).clamp(-1.0, 1.0));
    }
    let d2: f64 = rp.iter().zip(&rt).map(|(a, b)| (a - b) * (a - b)).sum();
    let n = n as f64;
    Ok(1.0 - 6.0 * d2 / (n * (n * n - 1.0)))
}

/// Protein-centric F-measure at one threshold (a label is predicted when its
/// score is `>= threshold`). Returns `(precision, recall, f)`.
pub fn f_at_threshold(scores: &Matrix, targets: &Matrix, threshold: f64) -> (f64, f64, f64) {
    let mut precision_sum = 0.0;
    let mut covered = 0usize;
    let mut recall_sum = 0.0;
    for p in 0..scores.rows() {
        let (s, t) = (scores.row(p), targets.row(p));
        let mut predicted = 0usize;
        let mut hits = 0usize;
        let mut positives = 0usize;
        for (&score, &target) in s.iter().zip(t) {
            let is_true = target > 0.5;
            if score >= threshold {
                predicted += 1;
                hits += usize::from(is_true);
            }
            positives += usize::from(is_true);
        }
        if predicted > 0 {
            covered += 1;
            precision_sum += hits as f64 / predicted as f64;
        }
        if positives > 0 {
            recall_sum += hits as f64 / positives as f64;
        }
    }
    let precision = if covered > 0 { precision_sum / covered as f64 } else { 0.0 };
    let recall = recall_sum / scores.rows() as f64;
    let f = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    (precision, recall, f)
}

pub const FMAX_GRID_STEPS: usize = 100;

/// Maximum protein-centric F over thresholds `0.00, 0.01, …, 1.00`.
pub fn fmax(scores: &Matrix, targets: &Matrix) -> Result<f64> {
    if scores.shape() != targets.shape() {
        return Err(Error::Shape {
            op: "fmax",
            left: scores.shape(),
            right: targets.shape(),
        });
    }
    if scores.is_empty() {
        return Err(Error::EmptySequence("fmax over an empty score matrix".into()));
    }
    if let Some(bad) = scores.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Contract(format!("score {bad} outside [0, 1]")));
    }
    Ok((0..=FMAX_GRID_STEPS)
        .map(|k| f_at_threshold(scores, targets, k as f64 / FMAX_GRID_STEPS as f64).2)
        .fold(0.0, f64::max))
}

/// Named metric values in emission order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    entries: Vec<(String, f64)>,
}

impl MetricsReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: f64) {
        self.entries.push((name.into(), value));
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }
}

/// One `key=value` line per metric.
impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, value) in &self.entries {
            writeln!(f, "{name}={value}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&ConfusionCounts::new(3, 4, 2, 1)).unwrap(), 0.7);
        assert_eq!(accuracy(&ConfusionCounts::new(5, 5, 0, 0)).unwrap(), 1.0);
        assert_eq!(accuracy(&ConfusionCounts::new(0, 0, 5, 5)).unwrap(), 0.0);
        assert!(accuracy(&ConfusionCounts::default()).is_err());
    }

    #[test]
    fn f1_examples() {
        assert!((f1(&ConfusionCounts::new(2, 0, 1, 1)) - 4.0 / 6.0).abs() < 1e-15);
        assert_eq!(f1(&ConfusionCounts::new(4, 9, 0, 0)), 1.0);
        assert_eq!(f1(&ConfusionCounts::new(0, 0, 3, 0)), 0.0);
        assert_eq!(f1(&ConfusionCounts::new(0, 7, 0, 0)), 0.0);
    }

    #[test]
    fn mcc_examples() {
        assert_eq!(mcc(&ConfusionCounts::new(5, 3, 0, 0)), 1.0);
        assert_eq!(mcc(&ConfusionCounts::new(0, 0, 2, 2)), -1.0);
        assert!((mcc(&ConfusionCounts::new(1, 2, 1, 0)) - 2.0 / 12f64.sqrt()).abs() < 1e-15);
        assert_eq!(mcc(&ConfusionCounts::new(3, 0, 2, 0)), 0.0);
    }

    #[test]
    fn mcc_survives_huge_counts() {
        let big = 3_000_000_000u64;
        let v = mcc(&ConfusionCounts::new(big, big, big / 3, big / 7));
        assert!(v.is_finite() && v > 0.0 && v < 1.0);
    }

    #[test]
    fn spearman_examples() {
        let x = [0.1, 0.5, 0.3, 2.0];
        assert_eq!(spearman(&x, &x).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[9.0, 5.0, 1.0]).unwrap(), -1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[2.0, 1.0, 3.0]).unwrap(), 0.5);
        assert!(spearman(&[1.0], &[1.0]).is_err());
        assert!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn spearman_with_ties_uses_rank_pearson() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        let rho = spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        // ranks [1, 2.5, 2.5, 4] vs [1, 2, 3, 4]: Σ(dx dy) = 4.5, Σdx² = 4.5, Σdy² = 5
        assert!((rho - 4.5 / (4.5f64 * 5.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn fmax_examples() {
        let s = Matrix::from_rows(&[[0.9, 0.2]]);
        let t = Matrix::from_rows(&[[1.0, 0.0]]);
        assert_eq!(fmax(&s, &t).unwrap(), 1.0);
        assert_eq!(f_at_threshold(&s, &t, 0.9).2, 1.0);
        assert!(f_at_threshold(&s, &t, 0.2).2 < 1.0);

        let zeros = Matrix::zeros(3, 4);
        let s = Matrix::from_fn(3, 4, |r, c| ((r + c) % 5) as f64 / 5.0);
        assert_eq!(fmax(&s, &zeros).unwrap(), 0.0);

        assert!(fmax(&Matrix::zeros(0, 0), &Matrix::zeros(0, 0)).is_err());
        assert!(fmax(&Matrix::filled(1, 1, 1.5), &Matrix::zeros(1, 1)).is_err());
    }

    #[test]
    fn report_renders_key_value_lines() {
        let mut r = MetricsReport::new();
        r.push("acc", 0.75);
        r.push("loss", 0.5);
        assert_eq!(r.to_string(), "acc=0.75\nloss=0.5\n");
        assert_eq!(r.get("loss"), Some(0.5));
        assert_eq!(r.get("f1"), None);
    }

    #[test]
    fn binary_one_vs_rest_matches_direct_counts() {
        let pred = [0, 1, 1, 0, 1];
        let act = [0, 1, 0, 0, 0];
        let cc = ConfusionCounts::one_vs_rest(&pred, &act, 1);
        assert_eq!(cc, ConfusionCounts::new(1, 2, 2, 0));
        assert_eq!(accuracy(&cc).unwrap(), multiclass_accuracy(&pred, &act).unwrap());
    }
}
