mod support;

use pathfuse::evalstats::{
    c_index, cls_metrics, cox_fit, cox_loss_grad, hazard_bins, km_estimate, logrank_test, roc_auc, BinScheme,
    FitMethod,
};
use pathfuse::{Rng, SurvivalCohort, Tensor};
use proptest::prelude::*;
use support::{brute_force_c_index, random_cohort};

fn cohort(times: Vec<f64>, events: Vec<bool>, scores: Vec<f64>) -> SurvivalCohort {
    SurvivalCohort::new(times, events, scores).unwrap()
}

#[test]
fn c_index_matches_pair_enumeration() {
    let mut rng = Rng::new(5, 0);
    let mut checked = 0;
    for _ in 0..1000 {
        let n = 2 + rng.below(30);
        let (t, e, s) = random_cohort(n, &mut rng);
        let expected = brute_force_c_index(&t, &e, &s);
        let got = c_index(&cohort(t, e, s)).ok();
        assert_eq!(got, expected);
        checked += expected.is_some() as usize;
    }
    assert!(checked > 900);
}

#[test]
fn monotone_hazards_give_extreme_c_index() {
    let t: Vec<f64> = (1..=10).map(f64::from).collect();
    let e = vec![true; 10];
    let dec: Vec<f64> = t.iter().map(|x| -x).collect();
    assert_eq!(c_index(&cohort(t.clone(), e.clone(), dec)).unwrap(), 1.0);
    assert_eq!(c_index(&cohort(t.clone(), e, t)).unwrap(), 0.0);
}

#[test]
fn km_without_events_stays_at_one() {
    let km = km_estimate(&SurvivalCohort::unscored(vec![1.0, 2.0, 5.0], vec![false; 3]).unwrap());
    assert!(km.survival.iter().all(|&s| s == 1.0));
}

#[test]
fn km_single_drop_when_all_die_together() {
    let km = km_estimate(&SurvivalCohort::unscored(vec![4.0; 6], vec![true; 6]).unwrap());
    assert_eq!(km.times, [4.0]);
    assert_eq!(km.survival, [0.0]);
    assert_eq!(km.survival_at(3.9), 1.0);
}

#[test]
fn km_product_limit_hand_fixture() {
    let km = km_estimate(&SurvivalCohort::unscored(vec![1.0, 2.0, 3.0], vec![true, false, true]).unwrap());
    assert_eq!(km.survival_at(0.5), 1.0);
    assert_eq!(km.survival_at(1.0), 2.0 / 3.0);
    assert_eq!(km.survival_at(2.5), 2.0 / 3.0);
    assert_eq!(km.survival_at(3.0), 0.0);
}

#[test]
fn logrank_hand_fixture_and_symmetry() {
    let a = SurvivalCohort::unscored(vec![1.0, 2.0], vec![true, true]).unwrap();
    let b = SurvivalCohort::unscored(vec![3.0, 4.0], vec![true, true]).unwrap();
    let ab = logrank_test(&a, &b).unwrap();
    let ba = logrank_test(&b, &a).unwrap();
    assert!((ab.chi2 - 2.88).abs() < 1e-2);
    assert!((ab.chi2 - ba.chi2).abs() < 1e-12);
    assert!((ab.p_value - ba.p_value).abs() < 1e-12);
}

#[test]
fn bins_of_one_to_hundred() {
    let s: Vec<f64> = (1..=100).map(f64::from).collect();
    let b = hazard_bins(&s, BinScheme::P33_66_100).unwrap();
    let sizes: Vec<usize> = (0..3).map(|j| b.iter().filter(|&&x| x == j).count()).collect();
    assert_eq!(sizes, [33, 33, 34]);
}

#[test]
fn cox_initial_loss_is_log_risk_set_sizes() {
    let mut rng = Rng::new(6, 0);
    let n = 12;
    let times: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
    let events: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.7)).collect();
    let (loss, _) = cox_loss_grad(&vec![0.0; n], &times, &events).unwrap();
    let expected: f64 = (0..n).filter(|&i| events[i]).map(|i| ((n - i) as f64).ln()).sum();
    assert!((loss - expected).abs() < 1e-12);
    let empty = cox_fit(&vec![vec![]; n], &cohort(times, events, vec![0.0; n]), FitMethod::Newton).unwrap();
    assert!(empty.beta.is_empty());
    assert!((empty.loss - expected).abs() < 1e-12);
}

#[test]
fn classification_hand_and_separable_cases() {
    // One misranked pair out of four.
    let auc = roc_auc(&[0.9, 0.4, 0.6, 0.1], &[true, true, false, false]).unwrap();
    assert_eq!(auc, 0.75);
    let probs = Tensor::from_rows(&[
        vec![0.8, 0.1, 0.1],
        vec![0.1, 0.8, 0.1],
        vec![0.1, 0.1, 0.8],
        vec![0.7, 0.2, 0.1],
    ])
    .unwrap();
    let m = cls_metrics(&probs, &[0, 1, 2, 0]).unwrap();
    assert_eq!(m.auc_micro, 1.0);
    assert_eq!(m.f1_micro, 1.0);
}

#[test]
fn shuffled_labels_give_chance_auc() {
    let mut rng = Rng::new(8, 0);
    let n = 4000;
    let scores: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let labels: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.5)).collect();
    let auc = roc_auc(&scores, &labels).unwrap();
    assert!((auc - 0.5).abs() < 0.05, "{auc}");
}

fn distinct(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::btree_set(-10_000i32..10_000, n)
        .prop_map(|s| s.into_iter().map(|x| x as f64 / 100.0).collect::<Vec<f64>>())
        .prop_shuffle()
}

fn survival_data() -> impl Strategy<Value = (Vec<f64>, Vec<bool>, Vec<f64>)> {
    (3usize..40).prop_flat_map(|n| {
        (
            proptest::collection::vec(1u32..50, n).prop_map(|v| v.into_iter().map(f64::from).collect()),
            proptest::collection::vec(any::<bool>(), n),
            distinct(n),
        )
    })
}

proptest! {
    #[test]
    fn negated_scores_complement_c_index((t, e, s) in survival_data()) {
        let neg: Vec<f64> = s.iter().map(|x| -x).collect();
        if let Ok(c) = c_index(&cohort(t.clone(), e.clone(), s)) {
            let d = c_index(&cohort(t, e, neg)).unwrap();
            prop_assert!((c + d - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn km_is_monotone_from_one((t, e, _) in survival_data()) {
        let km = km_estimate(&SurvivalCohort::unscored(t, e).unwrap());
        let mut prev = 1.0;
        for &s in &km.survival {
            prop_assert!(s <= prev && s >= 0.0);
            prev = s;
        }
    }

    #[test]
    fn logrank_of_a_group_with_itself_is_zero((t, e, _) in survival_data()) {
        let a = SurvivalCohort::unscored(t, e).unwrap();
        if let Ok(r) = logrank_test(&a, &a.clone()) {
            prop_assert_eq!(r.chi2, 0.0);
        }
    }

    #[test]
    fn cox_loss_is_shift_invariant((t, mut e, s) in survival_data(), c in -20.0f64..20.0) {
        e[0] = true;
        let (a, _) = cox_loss_grad(&s, &t, &e).unwrap();
        let shifted: Vec<f64> = s.iter().map(|x| x + c).collect();
        let (b, _) = cox_loss_grad(&shifted, &t, &e).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn bins_match_sort_oracle(s in (4usize..60).prop_flat_map(distinct), scheme in prop_oneof![
        Just(BinScheme::P33_66_100), Just(BinScheme::P25_50_75_100), Just(BinScheme::P50_100)
    ]) {
        let n = s.len();
        let k = scheme.n_bins();
        let bins = hazard_bins(&s, scheme).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
        for (rank, &i) in order.iter().enumerate() {
            // Rank r (0-based) lies in bin j when floor(j n / k) <= r < floor((j+1) n / k).
            let j = (0..k).find(|&j| rank < (j + 1) * n / k).unwrap();
            prop_assert_eq!(bins[i], j);
        }
        let sizes: Vec<usize> = (0..k).map(|j| bins.iter().filter(|&&b| b == j).count()).collect();
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
}
