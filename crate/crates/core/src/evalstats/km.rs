//! Kaplan-Meier product-limit estimator.

use std::io::Write;
use std::path::Path;

use super::{argsort_by, SurvivalCohort};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct KmCurve {
    /// Distinct observed times, ascending.
    pub times: Vec<f64>,
    /// Survival just after each time.
    pub survival: Vec<f64>,
    pub n_at_risk: Vec<usize>,
    pub n_events: Vec<usize>,
}

impl KmCurve {
    /// Right-continuous step function; 1 before the first time.
    pub fn survival_at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&x| x <= t);
        if k == 0 {
            1.0
        } else {
            self.survival[k - 1]
        }
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["time", "survival", "n_at_risk", "n_events"])?;
        for k in 0..self.times.len() {
            out.write_record([
                self.times[k].to_string(),
                self.survival[k].to_string(),
                self.n_at_risk[k].to_string(),
                self.n_events[k].to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

pub fn km_estimate(cohort: &SurvivalCohort) -> KmCurve {
    let n = cohort.len();
    let order = argsort_by(n, |i| cohort.times[i]);
    let mut curve = KmCurve {
        times: Vec::new(),
        survival: Vec::new(),
        n_at_risk: Vec::new(),
        n_events: Vec::new(),
    };
    let mut s = 1.0;
    let mut at_risk = n;
    let mut k = 0;
    while k < n {
        let t = cohort.times[order[k]];
        let mut end = k;
        let mut d = 0;
        while end < n && cohort.times[order[end]] == t {
            d += usize::from(cohort.events[order[end]]);
            end += 1;
        }
        s *= (at_risk - d) as f64 / at_risk as f64;
        curve.times.push(t);
        curve.survival.push(s);
        curve.n_at_risk.push(at_risk);
        curve.n_events.push(d);
        at_risk -= end - k;
        k = end;
    }
    curve
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_censor_event() {
        let c = SurvivalCohort::unscored(vec![1.0, 2.0, 3.0], vec![true, false, true]).unwrap();
        let km = km_estimate(&c);
        assert_eq!(km.survival_at(0.5), 1.0);
        assert_eq!(km.survival_at(1.0), 2.0 / 3.0);
        assert_eq!(km.survival_at(2.5), 2.0 / 3.0);
        assert_eq!(km.survival_at(3.0), 0.0);
        assert_eq!(km.n_at_risk, vec![3, 2, 1]);
        assert_eq!(km.n_events, vec![1, 0, 1]);
    }

    #[test]
    fn csv_header_and_rows() {
        let c = SurvivalCohort::unscored(vec![1.0, 1.0, 2.0], vec![true, true, false]).unwrap();
        let mut buf = Vec::new();
        km_estimate(&c).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "time,survival,n_at_risk,n_events");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("1,0.333"));
    }
}
