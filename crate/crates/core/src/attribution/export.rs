use std::path::Path;

use crate::error::{dim_err, Result};
use crate::numcore::Tensor;

/// One row per feature: name, attribution, input value.
pub fn write_patient_csv(path: impl AsRef<Path>, names: &[String], attributions: &[f64], values: &[f64]) -> Result<()> {
    if names.len() != attributions.len() || names.len() != values.len() {
        return dim_err("names, attributions and values differ in length");
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["feature_name", "attribution", "feature_value"])?;
    for ((n, a), v) in names.iter().zip(attributions).zip(values) {
        w.write_record([n.clone(), a.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRank {
    pub feature_name: String,
    pub mean_abs_attribution: f64,
    pub mean_attribution: f64,
}

/// Features ranked by mean absolute attribution across patients (ties keep
/// input order).
pub fn cohort_summary(names: &[String], per_patient: &[Vec<f64>]) -> Result<Vec<FeatureRank>> {
    if per_patient.iter().any(|r| r.len() != names.len()) {
        return dim_err("attribution rows differ from feature count");
    }
    let n = per_patient.len().max(1) as f64;
    let mut ranks: Vec<FeatureRank> = names
        .iter()
        .enumerate()
        .map(|(j, name)| FeatureRank {
            feature_name: name.clone(),
            mean_abs_attribution: per_patient.iter().map(|r| r[j].abs()).sum::<f64>() / n,
            mean_attribution: per_patient.iter().map(|r| r[j]).sum::<f64>() / n,
        })
        .collect();
    ranks.sort_by(|a, b| b.mean_abs_attribution.total_cmp(&a.mean_abs_attribution));
    Ok(ranks)
}

pub fn write_cohort_summary_csv(path: impl AsRef<Path>, ranks: &[FeatureRank]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["rank", "feature_name", "mean_abs_attribution", "mean_attribution"])?;
    for (i, r) in ranks.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            r.feature_name.clone(),
            r.mean_abs_attribution.to_string(),
            r.mean_attribution.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-node saliency: sum of absolute attributions over a node's features.
pub fn node_saliency(scores: &Tensor) -> Vec<f64> {
    (0..scores.rows())
        .map(|i| scores.row_slice(i).iter().map(|v| v.abs()).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranking_by_mean_abs() {
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let r = cohort_summary(&names, &[vec![0.1, -2.0, 0.5], vec![0.1, 1.0, -0.6]]).unwrap();
        let order: Vec<&str> = r.iter().map(|f| f.feature_name.as_str()).collect();
        assert_eq!(order, vec!["b", "c", "a"]);
        assert_eq!(r[0].mean_abs_attribution, 1.5);
        assert_eq!(r[0].mean_attribution, -0.5);
    }

    #[test]
    fn patient_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        write_patient_csv(&p, &["g0".into()], &[0.25], &[1.5]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "feature_name,attribution,feature_value\ng0,0.25,1.5\n");
    }
}
