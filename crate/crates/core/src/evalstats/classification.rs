//! Grade classification metrics from class probabilities.

use serde::Serialize;

use crate::error::{dim_err, Error, Result};
use crate::numcore::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClsMetrics {
    /// One-vs-rest AUC per class; `None` when a class is absent or universal.
    pub auc_per_class: Vec<Option<f64>>,
    pub auc_micro: f64,
    pub ap_micro: f64,
    pub f1_micro: f64,
    pub f1_per_class: Vec<f64>,
}

/// Average ranks (1-based), ties share the mean rank.
fn average_ranks(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let order = super::argsort_by(n, |i| x[i]);
    let mut ranks = vec![0.0; n];
    let mut k = 0;
    while k < n {
        let mut end = k + 1;
        while end < n && x[order[end]] == x[order[k]] {
            end += 1;
        }
        let r = (k + end + 1) as f64 / 2.0;
        for &i in &order[k..end] {
            ranks[i] = r;
        }
        k = end;
    }
    ranks
}

/// Area under the ROC curve via the rank-sum statistic.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let np = positive.iter().filter(|p| **p).count();
    let nn = positive.len() - np;
    if np == 0 || nn == 0 {
        return None;
    }
    let ranks = average_ranks(scores);
    let sum: f64 = ranks.iter().zip(positive).filter(|(_, p)| **p).map(|(r, _)| r).sum();
    Some((sum - (np * (np + 1)) as f64 / 2.0) / (np as f64 * nn as f64))
}

/// Average precision: sum over thresholds of recall increment times precision.
pub fn average_precision(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let np = positive.iter().filter(|p| **p).count();
    if np == 0 {
        return None;
    }
    let n = scores.len();
    let mut order = super::argsort_by(n, |i| scores[i]);
    order.reverse();
    let (mut tp, mut seen, mut ap, mut last_recall) = (0usize, 0usize, 0.0, 0.0);
    let mut k = 0;
    while k < n {
        let mut end = k;
        while end < n && scores[order[end]] == scores[order[k]] {
            tp += usize::from(positive[order[end]]);
            seen += 1;
            end += 1;
        }
        let recall = tp as f64 / np as f64;
        ap += (recall - last_recall) * tp as f64 / seen as f64;
        last_recall = recall;
        k = end;
    }
    Some(ap)
}

/// `probs` is `[n, C]`, rows summing to one; `labels` in `0..C`.
pub fn cls_metrics(probs: &Tensor, labels: &[usize]) -> Result<ClsMetrics> {
    let (n, c) = probs.expect_2d("class probabilities")?;
    if labels.len() != n {
        return dim_err(format!("{} labels for {n} rows", labels.len()));
    }
    if let Some(l) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::Parameter(format!("label {l} outside {c} classes")));
    }
    let mut present = vec![false; c];
    for &l in labels {
        present[l] = true;
    }
    if present.iter().filter(|p| **p).count() < 2 {
        return Err(Error::UndefinedMetric("fewer than two classes present".into()));
    }
    let col = |j: usize| (0..n).map(|i| probs.at2(i, j)).collect::<Vec<_>>();
    let auc_per_class = (0..c)
        .map(|j| roc_auc(&col(j), &labels.iter().map(|&l| l == j).collect::<Vec<_>>()))
        .collect();
    let flat_scores: Vec<f64> = probs.data().to_vec();
    let flat_pos: Vec<bool> = (0..n * c).map(|k| labels[k / c] == k % c).collect();
    let auc_micro = roc_auc(&flat_scores, &flat_pos).expect("two classes present");
    let ap_micro = average_precision(&flat_scores, &flat_pos).expect("positives present");

    let pred: Vec<usize> = (0..n)
        .map(|i| {
            let row = probs.row_slice(i);
            (0..c).fold(0, |best, j| if row[j] > row[best] { j } else { best })
        })
        .collect();
    let mut f1_per_class = Vec::with_capacity(c);
    let mut tp_all = 0usize;
    for j in 0..c {
        let tp = (0..n).filter(|&i| pred[i] == j && labels[i] == j).count();
        let fp = (0..n).filter(|&i| pred[i] == j && labels[i] != j).count();
        let fneg = (0..n).filter(|&i| pred[i] != j && labels[i] == j).count();
        tp_all += tp;
        let denom = 2 * tp + fp + fneg;
        f1_per_class.push(if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 });
    }
    // Single-label micro F1 reduces to accuracy.
    let f1_micro = tp_all as f64 / n as f64;
    Ok(ClsMetrics {
        auc_per_class,
        auc_micro,
        ap_micro,
        f1_micro,
        f1_per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_hand_cases() {
        assert_eq!(roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]), Some(0.75));
        assert_eq!(roc_auc(&[0.5, 0.5], &[false, true]), Some(0.5));
        assert_eq!(roc_auc(&[0.5, 0.5], &[true, true]), None);
    }

    #[test]
    fn ap_hand_case() {
        // Ranking: 0.8(+) 0.4(-) 0.35(+) 0.1(-): AP = 0.5*1 + 0.5*(2/3).
        let ap = average_precision(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
        assert!((ap - (0.5 + 1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn perfect_classifier() {
        let p = Tensor::from_rows(&[
            vec![0.9, 0.05, 0.05],
            vec![0.1, 0.8, 0.1],
            vec![0.2, 0.1, 0.7],
            vec![0.6, 0.3, 0.1],
        ])
        .unwrap();
        let m = cls_metrics(&p, &[0, 1, 2, 0]).unwrap();
        assert_eq!(m.f1_micro, 1.0);
        assert_eq!(m.f1_per_class, vec![1.0, 1.0, 1.0]);
        assert_eq!(m.auc_micro, 1.0);
        assert!(m.auc_per_class.iter().all(|a| *a == Some(1.0)));
    }

    #[test]
    fn single_class_is_undefined() {
        let p = Tensor::from_rows(&[vec![0.5, 0.5], vec![0.6, 0.4]]).unwrap();
        assert!(cls_metrics(&p, &[1, 1]).is_err());
    }
}
