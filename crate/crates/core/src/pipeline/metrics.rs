//! Cross-validated metrics, risk-bin comparisons and report files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::run::PatientPrediction;
use crate::error::{Error, Result};
use crate::evalstats::{c_index, cls_metrics, hazard_bins, km_estimate, logrank_test, zscore, BinScheme, SurvivalCohort};
use crate::nets::Task;
use crate::numcore::Tensor;
use crate::synthio::Cohort;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single fold.
    pub sd: f64,
    pub n: usize,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, sd, n })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub n_test: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_index: Option<f64>,
    /// C-index of the generating risk on the same patients (synthetic only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_c_index: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc_micro: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ap_micro: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1_micro: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinComparison {
    /// e.g. `[0,33] vs (33,66]`.
    pub groups: String,
    pub chi2: f64,
    pub p_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub task: Task,
    pub model: String,
    pub seed: u64,
    pub folds: Vec<FoldMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_index: Option<MeanSd>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_c_index: Option<MeanSd>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc_micro: Option<MeanSd>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ap_micro: Option<MeanSd>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1_micro: Option<MeanSd>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bin_scheme: Option<BinScheme>,
    pub bin_counts: Vec<usize>,
    pub bin_comparisons: Vec<BinComparison>,
}

/// One pooled test patient, for plots and KM curves.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PredictionRow {
    pub fold: usize,
    pub patient_id: String,
    pub time: f64,
    pub event: bool,
    pub hazard: Option<f64>,
    /// Hazard z-scored within its fold (plotting only).
    pub hazard_z: Option<f64>,
    pub bin: Option<usize>,
    pub grade: Option<usize>,
    pub predicted_grade: Option<usize>,
}

fn cut_percents(scheme: BinScheme) -> Vec<u32> {
    match scheme {
        BinScheme::P33_66_100 => vec![0, 33, 66, 100],
        BinScheme::P25_50_75_100 => vec![0, 25, 50, 75, 100],
        BinScheme::P50_100 => vec![0, 50, 100],
    }
}

/// Interval label of bin `j`, closed on the left only for the first.
pub fn bin_label(scheme: BinScheme, j: usize) -> String {
    let c = cut_percents(scheme);
    let open = if j == 0 { '[' } else { '(' };
    format!("{open}{},{}]", c[j], c[j + 1])
}

fn unscored(rows: &[&PredictionRow]) -> Result<SurvivalCohort> {
    SurvivalCohort::unscored(rows.iter().map(|r| r.time).collect(), rows.iter().map(|r| r.event).collect())
}

/// Per-fold and pooled metrics of one model. `per_fold` pairs a fold index
/// with that fold's test predictions. Risk bins are assigned within each
/// fold and pooled for the log-rank comparisons.
pub fn compute_metrics(
    cohort: &Cohort,
    cfg: &RunConfig,
    model: &str,
    per_fold: &[(usize, Vec<PatientPrediction>)],
) -> Result<(Metrics, Vec<PredictionRow>)> {
    let mut folds = Vec::with_capacity(per_fold.len());
    let mut rows = Vec::new();
    for (k, preds) in per_fold {
        if preds.is_empty() {
            return Err(Error::UndefinedMetric(format!("fold {k} has no test predictions")));
        }
        let patients: Vec<usize> = preds.iter().map(|p| p.patient).collect();
        let mut fm = FoldMetrics {
            fold: *k,
            n_test: preds.len(),
            c_index: None,
            oracle_c_index: None,
            auc_micro: None,
            ap_micro: None,
            f1_micro: None,
        };
        let mut bins = vec![None; preds.len()];
        let mut zs = vec![None; preds.len()];
        match cfg.task {
            Task::Survival => {
                let hz: Vec<f64> = preds
                    .iter()
                    .map(|p| p.hazard.ok_or_else(|| Error::UndefinedMetric("missing hazard".into())))
                    .collect::<Result<_>>()?;
                fm.c_index = Some(c_index(&cohort.survival(&patients, hz.clone())?)?);
                if cohort.patients[patients[0]].true_risk.is_some() {
                    let oracle: Vec<f64> = patients.iter().map(|&p| cohort.patients[p].true_risk.unwrap_or(0.0)).collect();
                    fm.oracle_c_index = Some(c_index(&cohort.survival(&patients, oracle)?)?);
                }
                for (j, b) in hazard_bins(&hz, cfg.bins)?.into_iter().enumerate() {
                    bins[j] = Some(b);
                }
                for (j, z) in zscore(&hz).into_iter().enumerate() {
                    zs[j] = Some(z);
                }
            }
            Task::Grade => {
                let c = Task::Grade.out_width();
                let mut probs = Vec::with_capacity(preds.len() * c);
                for p in preds {
                    let s = p
                        .class_scores
                        .as_ref()
                        .ok_or_else(|| Error::UndefinedMetric("missing class scores".into()))?;
                    let total: f64 = s.iter().sum();
                    probs.extend(s.iter().map(|v| v / total));
                }
                let labels = patients
                    .iter()
                    .map(|&p| cohort.patients[p].grade.ok_or_else(|| Error::UndefinedMetric("missing grade".into())))
                    .collect::<Result<Vec<_>>>()?;
                let m = cls_metrics(&Tensor::matrix(preds.len(), c, probs)?, &labels)?;
                fm.auc_micro = Some(m.auc_micro);
                fm.ap_micro = Some(m.ap_micro);
                fm.f1_micro = Some(m.f1_micro);
            }
        }
        for (j, p) in preds.iter().enumerate() {
            let rec = &cohort.patients[p.patient];
            rows.push(PredictionRow {
                fold: *k,
                patient_id: rec.id.clone(),
                time: rec.time,
                event: rec.event,
                hazard: p.hazard,
                hazard_z: zs[j],
                bin: bins[j],
                grade: rec.grade,
                predicted_grade: p.predicted_grade,
            });
        }
        folds.push(fm);
    }

    let collect = |f: fn(&FoldMetrics) -> Option<f64>| MeanSd::of(&folds.iter().filter_map(f).collect::<Vec<_>>());
    let mut metrics = Metrics {
        task: cfg.task,
        model: model.to_string(),
        seed: cfg.seed,
        c_index: collect(|f| f.c_index),
        oracle_c_index: collect(|f| f.oracle_c_index),
        auc_micro: collect(|f| f.auc_micro),
        ap_micro: collect(|f| f.ap_micro),
        f1_micro: collect(|f| f.f1_micro),
        folds: Vec::new(),
        bin_scheme: None,
        bin_counts: Vec::new(),
        bin_comparisons: Vec::new(),
    };
    if cfg.task == Task::Survival {
        let k = cfg.bins.n_bins();
        let groups: Vec<Vec<&PredictionRow>> = (0..k)
            .map(|j| rows.iter().filter(|r| r.bin == Some(j)).collect())
            .collect();
        metrics.bin_scheme = Some(cfg.bins);
        metrics.bin_counts = groups.iter().map(Vec::len).collect();
        for a in 0..k {
            for b in a + 1..k {
                let (ga, gb) = (&groups[a], &groups[b]);
                if ga.is_empty() || gb.is_empty() {
                    continue;
                }
                match logrank_test(&unscored(ga)?, &unscored(gb)?) {
                    Ok(lr) => metrics.bin_comparisons.push(BinComparison {
                        groups: format!("{} vs {}", bin_label(cfg.bins, a), bin_label(cfg.bins, b)),
                        chi2: lr.chi2,
                        p_value: lr.p_value,
                    }),
                    Err(Error::UndefinedTest(reason)) => log::warn!("bins {a} vs {b}: {reason}"),
                    Err(e) => return Err(e),
                }
            }
        }
    }
    metrics.folds = folds;
    Ok((metrics, rows))
}

/// Writes `metrics.json`, `predictions.csv` and, for survival, one
/// Kaplan-Meier CSV per risk bin.
pub fn write_reports(out: &Path, metrics: &Metrics, rows: &[PredictionRow]) -> Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("metrics.json"), serde_json::to_string_pretty(metrics)? + "\n")?;
    let mut w = csv::Writer::from_path(out.join("predictions.csv"))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    if let Some(scheme) = metrics.bin_scheme {
        for j in 0..scheme.n_bins() {
            let group: Vec<&PredictionRow> = rows.iter().filter(|r| r.bin == Some(j)).collect();
            if group.is_empty() {
                continue;
            }
            km_estimate(&unscored(&group)?).save_csv(out.join(format!("km_bin{j}.csv")))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_sample_sd() {
        let m = MeanSd::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.mean, 2.0);
        assert_eq!(m.sd, 1.0);
        assert_eq!(MeanSd::of(&[4.0]).unwrap().sd, 0.0);
        assert!(MeanSd::of(&[]).is_none());
    }

    #[test]
    fn bin_labels() {
        assert_eq!(bin_label(BinScheme::P33_66_100, 0), "[0,33]");
        assert_eq!(bin_label(BinScheme::P33_66_100, 1), "(33,66]");
        assert_eq!(bin_label(BinScheme::P25_50_75_100, 3), "(75,100]");
    }
}
