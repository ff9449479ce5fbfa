//! Two-group log-rank test.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::SurvivalCohort;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRank {
    pub chi2: f64,
    pub p_value: f64,
    /// Observed minus expected events in group A.
    pub o_minus_e: f64,
    pub variance: f64,
}

pub fn logrank_test(a: &SurvivalCohort, b: &SurvivalCohort) -> Result<LogRank> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::UndefinedTest("log-rank needs two non-empty groups".into()));
    }
    let mut times: Vec<f64> = a
        .times
        .iter()
        .zip(&a.events)
        .chain(b.times.iter().zip(&b.events))
        .filter(|(_, e)| **e)
        .map(|(t, _)| *t)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();

    let count = |c: &SurvivalCohort, t: f64| {
        let risk = c.times.iter().filter(|&&x| x >= t).count() as f64;
        let died = c
            .times
            .iter()
            .zip(&c.events)
            .filter(|(x, e)| **e && **x == t)
            .count() as f64;
        (risk, died)
    };
    let (mut o_e, mut var) = (0.0, 0.0);
    for t in times {
        let (na, da) = count(a, t);
        let (nb, db) = count(b, t);
        let n = na + nb;
        let d = da + db;
        o_e += da - d * na / n;
        if n > 1.0 {
            var += d * (na / n) * (nb / n) * (n - d) / (n - 1.0);
        }
    }
    let chi2 = if var > 0.0 { o_e * o_e / var } else { 0.0 };
    let dist = ChiSquared::new(1.0).expect("one degree of freedom");
    Ok(LogRank {
        chi2,
        p_value: 1.0 - dist.cdf(chi2),
        o_minus_e: o_e,
        variance: var,
    })
}
