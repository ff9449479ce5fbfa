//! Risk stratification by percentile cut points of predicted hazard.

use serde::{Deserialize, Serialize};

use super::argsort_by;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinScheme {
    P33_66_100,
    P25_50_75_100,
    P50_100,
}

impl BinScheme {
    pub fn n_bins(self) -> usize {
        match self {
            BinScheme::P33_66_100 => 3,
            BinScheme::P25_50_75_100 => 4,
            BinScheme::P50_100 => 2,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "p33_66_100" => Ok(BinScheme::P33_66_100),
            "p25_50_75_100" => Ok(BinScheme::P25_50_75_100),
            "p50_100" => Ok(BinScheme::P50_100),
            other => Err(Error::Configuration(format!("unknown bin scheme {other}"))),
        }
    }
}

/// Assigns each score a bin in `0..k`. Bin `j` covers the sorted ranks
/// `(floor(j n/k), floor((j+1) n/k)]` (for n >= k); ties with a cut value fall in the
/// lower bin, so equal scores always share a bin.
pub fn hazard_bins(scores: &[f64], scheme: BinScheme) -> Result<Vec<usize>> {
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("hazard scores".into()));
    }
    let n = scores.len();
    let k = scheme.n_bins();
    if n == 0 {
        return Ok(Vec::new());
    }
    let order = argsort_by(n, |i| scores[i]);
    let cuts: Vec<f64> = (1..k)
        .map(|j| j * n / k)
        .filter(|&c| c > 0)
        .map(|c| scores[order[c - 1]])
        .collect();
    Ok(scores
        .iter()
        .map(|s| cuts.iter().filter(|&&c| *s > c).count())
        .collect())
}
