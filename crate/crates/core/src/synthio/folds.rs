//! Monte Carlo cross-validation splits by patient.

use serde::{Deserialize, Serialize};

use super::cohort::Cohort;
use crate::error::{Error, Result};
use crate::numcore::Rng;

/// Patient indices into a [`Cohort`]. ROIs follow their patient.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub index: usize,
    pub train: Vec<usize>,
    /// Only patients with every modality the cohort carries, so all models
    /// score the same set.
    pub test: Vec<usize>,
}

/// Independent random splits; fold `k` shuffles with stream `k` of `seed`.
pub fn split_folds(cohort: &Cohort, folds: usize, train_fraction: f64, seed: u64) -> Result<Vec<Fold>> {
    if folds == 0 {
        return Err(Error::Parameter("need at least one fold".into()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Parameter(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let n = cohort.len();
    let complete: Vec<bool> = cohort.patients.iter().map(|p| cohort.covers(p)).collect();
    let n_train = ((train_fraction * n as f64).round() as usize).min(n.saturating_sub(1));
    if n_train == 0 || n_train == n {
        return Err(Error::Parameter(format!("{n} patients cannot fill both sides of a split")));
    }
    (0..folds)
        .map(|k| {
            let mut order: Vec<usize> = (0..n).collect();
            Rng::new(seed, k as u64).shuffle(&mut order);
            let mut train = order[..n_train].to_vec();
            let mut test: Vec<usize> = order[n_train..]
                .iter()
                .copied()
                .filter(|&i| complete[i])
                .collect();
            if test.is_empty() {
                return Err(Error::Parameter(format!("fold {k} has no complete test patients")));
            }
            train.sort_unstable();
            test.sort_unstable();
            Ok(Fold { index: k, train, test })
        })
        .collect()
}
