mod common;

use common::*;
use crmtlr::metrics::{cause_specific_cindex, horizon_auroc, AurocNegatives, Outcome};
use proptest::prelude::*;
use rand::Rng;

fn random_outcomes<R: Rng>(r: &mut R, n: usize, n_events: usize) -> (Vec<f64>, Vec<Outcome>) {
    // coarse values so that both time ties and score ties are common
    let scores = (0..n).map(|_| r.random_range(0..8) as f64 / 4.0).collect();
    let outcomes = (0..n)
        .map(|_| Outcome::new(r.random_range(1..12) as f64 / 2.0, r.random_range(0..=n_events)))
        .collect();
    (scores, outcomes)
}

#[test]
fn cindex_equals_pair_enumeration() {
    let mut r = rng(20);
    let mut checked = 0;
    for _ in 0..100 {
        let n = r.random_range(2..=50);
        let (scores, outcomes) = random_outcomes(&mut r, n, 2);
        for e in 1..=2 {
            match brute_cindex(&scores, &outcomes, e) {
                Some(want) => {
                    assert_eq!(cause_specific_cindex(&scores, &outcomes, e).unwrap(), want);
                    checked += 1;
                }
                None => assert!(cause_specific_cindex(&scores, &outcomes, e).is_err()),
            }
        }
    }
    assert!(checked > 150);
}

#[test]
fn auroc_equals_pair_enumeration() {
    let mut r = rng(21);
    for _ in 0..100 {
        let n = r.random_range(2..=50);
        let (scores, outcomes) = random_outcomes(&mut r, n, 2);
        let tau = r.random_range(1.0..5.0);
        for e in 1..=2 {
            let got = horizon_auroc(&scores, &outcomes, e, tau, AurocNegatives::AllOthers).ok();
            assert_eq!(got, brute_auroc(&scores, &outcomes, e, tau));
        }
    }
}

#[test]
fn five_subject_mixed_censoring() {
    let scores = [0.9, 0.4, 0.7, 0.1, 0.5];
    let outcomes = [
        Outcome::new(1.0, 1),
        Outcome::new(2.0, 0),
        Outcome::new(3.0, 1),
        Outcome::new(4.0, 2),
        Outcome::new(5.0, 0),
    ];
    let c = cause_specific_cindex(&scores, &outcomes, 1).unwrap();
    assert_eq!(Some(c), brute_cindex(&scores, &outcomes, 1));
    // pairs (1,2) (1,3) (1,4) (1,5) (3,4) (3,5): all concordant
    assert_eq!(c, 1.0);
}

#[test]
fn eight_subjects_with_ties() {
    let scores = [0.5, 0.5, 0.2, 0.8, 0.5, 0.2, 0.9, 0.1];
    let outcomes: Vec<Outcome> = [(1.0, 1), (2.0, 1), (2.0, 0), (3.0, 2), (4.0, 1), (5.0, 0), (6.0, 1), (7.0, 0)]
        .iter()
        .map(|&(t, e)| Outcome::new(t, e))
        .collect();
    for e in 1..=2 {
        assert_eq!(cause_specific_cindex(&scores, &outcomes, e).ok(), brute_cindex(&scores, &outcomes, e));
        assert_eq!(
            horizon_auroc(&scores, &outcomes, e, 4.0, AurocNegatives::AllOthers).ok(),
            brute_auroc(&scores, &outcomes, e, 4.0)
        );
    }
}

#[test]
fn undefined_cases_are_errors() {
    let outcomes = [Outcome::new(1.0, 0), Outcome::new(2.0, 0)];
    assert!(cause_specific_cindex(&[0.1, 0.2], &outcomes, 1).is_err());
    assert!(horizon_auroc(&[0.1, 0.2], &outcomes, 1, 5.0, AurocNegatives::AllOthers).is_err());
    let all_positive = [Outcome::new(1.0, 1), Outcome::new(2.0, 1)];
    assert!(horizon_auroc(&[0.1, 0.2], &all_positive, 1, 5.0, AurocNegatives::AllOthers).is_err());
}

#[test]
fn excluding_early_censored_drops_them_from_negatives() {
    let scores = [0.9, 0.95, 0.1];
    let outcomes = [Outcome::new(1.0, 1), Outcome::new(0.5, 0), Outcome::new(3.0, 0)];
    let all = horizon_auroc(&scores, &outcomes, 1, 2.0, AurocNegatives::AllOthers).unwrap();
    let excl = horizon_auroc(&scores, &outcomes, 1, 2.0, AurocNegatives::ExcludeCensoredBeforeHorizon).unwrap();
    assert_eq!(all, 0.5);
    assert_eq!(excl, 1.0);
}

fn cohort_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<Outcome>)> {
    prop::collection::vec((0u8..10, 1u8..10, 0usize..=2), 2..40).prop_map(|rows| {
        let scores = rows.iter().map(|r| r.0 as f64 / 3.0).collect();
        let outcomes = rows.iter().map(|r| Outcome::new(r.1 as f64, r.2)).collect();
        (scores, outcomes)
    })
}

proptest! {
    #[test]
    fn cindex_in_unit_interval_and_rank_invariant((scores, outcomes) in cohort_strategy()) {
        if let Ok(c) = cause_specific_cindex(&scores, &outcomes, 1) {
            prop_assert!((0.0..=1.0).contains(&c));
            let squashed: Vec<f64> = scores.iter().map(|s| (2.0 * s).exp() - 7.0).collect();
            prop_assert_eq!(cause_specific_cindex(&squashed, &outcomes, 1).unwrap(), c);
            let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
            let f = cause_specific_cindex(&flipped, &outcomes, 1).unwrap();
            prop_assert!((f - (1.0 - c)).abs() < 1e-12);
        }
    }

    #[test]
    fn auroc_in_unit_interval_and_rank_invariant((scores, outcomes) in cohort_strategy(), tau in 1.0..9.0f64) {
        if let Ok(a) = horizon_auroc(&scores, &outcomes, 2, tau, AurocNegatives::AllOthers) {
            prop_assert!((0.0..=1.0).contains(&a));
            let squashed: Vec<f64> = scores.iter().map(|s| s.powi(3) + 1.0).collect();
            prop_assert_eq!(horizon_auroc(&squashed, &outcomes, 2, tau, AurocNegatives::AllOthers).unwrap(), a);
            let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
            let f = horizon_auroc(&flipped, &outcomes, 2, tau, AurocNegatives::AllOthers).unwrap();
            prop_assert!((f - (1.0 - a)).abs() < 1e-12);
        }
    }
}
