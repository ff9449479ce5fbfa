//! Harrell's concordance index.

use super::{argsort_by, SurvivalCohort};
use crate::error::{dim_err, Error, Result};

/// Fenwick tree over score ranks.
struct Fenwick {
    tree: Vec<u64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Self { tree: vec![0; n + 1] }
    }

    fn add(&mut self, pos: usize) {
        let mut i = pos + 1;
        while i < self.tree.len() {
            self.tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of inserted positions `< pos`.
    fn prefix(&self, pos: usize) -> u64 {
        let mut i = pos;
        let mut s = 0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Raw pair counts: concordant, tied on score, admissible.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairCounts {
    pub concordant: u64,
    pub tied: u64,
    pub admissible: u64,
}

impl PairCounts {
    pub fn c_index(&self) -> Result<f64> {
        if self.admissible == 0 {
            return Err(Error::UndefinedMetric("no admissible pairs".into()));
        }
        Ok((self.concordant as f64 + 0.5 * self.tied as f64) / self.admissible as f64)
    }
}

/// Pair counts in O(n log n). A pair (i, j) is admissible when `t_i < t_j`
/// and patient i is uncensored; it is concordant when `s_i > s_j`.
pub fn pair_counts(times: &[f64], events: &[bool], scores: &[f64]) -> Result<PairCounts> {
    let n = times.len();
    if events.len() != n || scores.len() != n {
        return dim_err("times, events and scores differ in length");
    }
    // Dense score ranks.
    let by_score = argsort_by(n, |i| scores[i]);
    let mut rank = vec![0usize; n];
    let mut r = 0;
    for (k, &i) in by_score.iter().enumerate() {
        if k > 0 && scores[i] != scores[by_score[k - 1]] {
            r += 1;
        }
        rank[i] = r;
    }
    let levels = r + 1;

    // Sweep from the latest time; the tree holds patients with strictly later times.
    let desc: Vec<usize> = argsort_by(n, |i| times[i]).into_iter().rev().collect();
    let mut tree = Fenwick::new(levels);
    let mut inserted = 0u64;
    let mut counts = PairCounts {
        concordant: 0,
        tied: 0,
        admissible: 0,
    };
    let mut start = 0;
    while start < n {
        let t = times[desc[start]];
        let mut end = start + 1;
        while end < n && times[desc[end]] == t {
            end += 1;
        }
        for &i in desc[start..end].iter().filter(|&&i| events[i]) {
            let below = tree.prefix(rank[i]);
            let at_most = tree.prefix(rank[i] + 1);
            counts.concordant += below;
            counts.tied += at_most - below;
            counts.admissible += inserted;
        }
        for &i in &desc[start..end] {
            tree.add(rank[i]);
            inserted += 1;
        }
        start = end;
    }
    Ok(counts)
}

/// Fraction of admissible pairs ranked correctly; score ties count one half.
pub fn c_index(cohort: &SurvivalCohort) -> Result<f64> {
    pair_counts(&cohort.times, &cohort.events, &cohort.scores)?.c_index()
}
