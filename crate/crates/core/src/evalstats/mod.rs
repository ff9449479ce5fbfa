//! Survival objectives and metrics, plus grade-classification metrics.

pub mod bins;
pub mod classification;
pub mod concordance;
pub mod cox;
pub mod km;
pub mod logrank;

pub use bins::{hazard_bins, BinScheme};
pub use classification::{cls_metrics, roc_auc, ClsMetrics};
pub use concordance::c_index;
pub use cox::{cox_fit, cox_loss_grad, CoxFit, FitMethod};
pub use km::{km_estimate, KmCurve};
pub use logrank::{logrank_test, LogRank};

use crate::error::{Error, Result};

/// Per-patient survival outcome with a predicted risk score.
#[derive(Clone, Debug, PartialEq)]
pub struct SurvivalCohort {
    pub times: Vec<f64>,
    /// `true` = death observed, `false` = censored.
    pub events: Vec<bool>,
    pub scores: Vec<f64>,
}

impl SurvivalCohort {
    pub fn new(times: Vec<f64>, events: Vec<bool>, scores: Vec<f64>) -> Result<Self> {
        if times.len() != events.len() || times.len() != scores.len() {
            return Err(Error::Dimension(format!(
                "cohort columns differ in length: {} times, {} events, {} scores",
                times.len(),
                events.len(),
                scores.len()
            )));
        }
        if let Some(t) = times.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(Error::Parameter(format!("survival time {t} must be positive and finite")));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("cohort scores".into()));
        }
        Ok(Self {
            times,
            events,
            scores,
        })
    }

    /// Cohort without predictions (scores all zero), for KM and log-rank.
    pub fn unscored(times: Vec<f64>, events: Vec<bool>) -> Result<Self> {
        let n = times.len();
        Self::new(times, events, vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_events(&self) -> usize {
        self.events.iter().filter(|e| **e).count()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            times: idx.iter().map(|&i| self.times[i]).collect(),
            events: idx.iter().map(|&i| self.events[i]).collect(),
            scores: idx.iter().map(|&i| self.scores[i]).collect(),
        }
    }
}

/// Standardises scores to zero mean and unit variance (plot export only).
pub fn zscore(scores: &[f64]) -> Vec<f64> {
    let n = scores.len() as f64;
    if scores.is_empty() {
        return Vec::new();
    }
    let mean = scores.iter().sum::<f64>() / n;
    let sd = (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd == 0.0 {
        return vec![0.0; scores.len()];
    }
    scores.iter().map(|s| (s - mean) / sd).collect()
}

/// Indices `0..n` ordered by a key, ties kept in index order.
pub(crate) fn argsort_by(n: usize, key: impl Fn(usize) -> f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
    idx
}
