//! Error-rate metrics against an exhaustive exact-arithmetic sweep.

use num_rational::Ratio;
use num_traits::Signed;
use proptest::prelude::*;

use aavit::data::Label;
use aavit::metrics::{candidate_thresholds, eer, far, hter, mdr, Counts, ScoreRecord};

type Q = Ratio<i64>;

fn records(reals: &[f64], attacks: &[f64]) -> Vec<ScoreRecord> {
    let mut out = Vec::new();
    for (i, &s) in reals.iter().enumerate() {
        out.push(ScoreRecord::new(format!("r{i}"), s, Label::Real).unwrap());
    }
    for (i, &s) in attacks.iter().enumerate() {
        out.push(ScoreRecord::new(format!("a{i}"), s, Label::Attack).unwrap());
    }
    out
}

/// Every achievable `(FAR, MDR)` pair: thresholds at each distinct score plus
/// one above all of them.
fn sweep(reals: &[f64], attacks: &[f64]) -> Vec<(Q, Q)> {
    let mut cuts: Vec<f64> = reals.iter().chain(attacks).copied().collect();
    cuts.push(f64::INFINITY);
    cuts.iter()
        .map(|&t| {
            let fa = attacks.iter().filter(|&&s| s >= t).count() as i64;
            let md = reals.iter().filter(|&&s| s < t).count() as i64;
            (Q::new(fa, attacks.len() as i64), Q::new(md, reals.len() as i64))
        })
        .collect()
}

/// Optimal pairs: least `|FAR − MDR|`, then least `FAR + MDR`.
fn brute_force(reals: &[f64], attacks: &[f64]) -> (Q, Vec<(Q, Q)>) {
    let pairs = sweep(reals, attacks);
    let key = |&(f, m): &(Q, Q)| ((f - m).abs(), f + m);
    let best = pairs.iter().map(key).min().unwrap();
    let optimal: Vec<(Q, Q)> = pairs.into_iter().filter(|p| key(p) == best).collect();
    let value = (optimal[0].0 + optimal[0].1) / 2;
    (value, optimal)
}

fn to_f64(q: Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

fn score_set() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    // a coarse grid forces ties, including across classes
    let score = prop_oneof![(0u32..=20).prop_map(|k| k as f64 / 20.0), 0.0f64..=1.0];
    (
        prop::collection::vec(score.clone(), 2..=50),
        prop::collection::vec(score, 2..=50),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn eer_matches_exhaustive_sweep((reals, attacks) in score_set()) {
        let recs = records(&reals, &attacks);
        let (value, alpha) = eer(&recs).unwrap();
        let (want, optimal) = brute_force(&reals, &attacks);

        let c = Counts::at(&recs, alpha);
        let got = (
            Q::new(c.spoof_judged_real as i64, c.n_spoof as i64),
            Q::new(c.real_judged_spoof as i64, c.n_real as i64),
        );
        prop_assert!(optimal.contains(&got), "alpha {alpha} gives {got:?}, optimal {optimal:?}");
        prop_assert_eq!((got.0 + got.1) / 2, want);
        prop_assert!((value - to_f64(want)).abs() <= 1e-15);
        prop_assert!((hter(&recs, alpha).unwrap() - value).abs() <= 1e-12);
    }

    #[test]
    fn far_and_mdr_count_every_candidate((reals, attacks) in score_set()) {
        let recs = records(&reals, &attacks);
        for alpha in candidate_thresholds(&recs) {
            let fa = attacks.iter().filter(|&&s| s >= alpha).count() as f64 / attacks.len() as f64;
            let md = reals.iter().filter(|&&s| s < alpha).count() as f64 / reals.len() as f64;
            prop_assert_eq!(far(&recs, alpha).unwrap(), fa);
            prop_assert_eq!(mdr(&recs, alpha).unwrap(), md);
        }
    }

    #[test]
    fn eer_ignores_strictly_increasing_rescoring((reals, attacks) in score_set()) {
        let squash = |s: &f64| s * s * 0.5 + 0.25;
        let a = eer(&records(&reals, &attacks)).unwrap().0;
        let r2: Vec<f64> = reals.iter().map(squash).collect();
        let a2: Vec<f64> = attacks.iter().map(squash).collect();
        let b = eer(&records(&r2, &a2)).unwrap().0;
        prop_assert_eq!(a, b);
    }
}

#[test]
fn hand_check_fixture() {
    let recs = records(&[0.9, 0.8, 0.3], &[0.7, 0.2, 0.1]);
    let (value, alpha) = eer(&recs).unwrap();
    assert_eq!(aavit::metrics::percent(value), "33.33");
    assert!((value - 1.0 / 3.0).abs() < 1e-15);
    let (want, _) = brute_force(&[0.9, 0.8, 0.3], &[0.7, 0.2, 0.1]);
    assert_eq!(want, Q::new(1, 3));
    assert!((far(&recs, alpha).unwrap() - mdr(&recs, alpha).unwrap()).abs() < 1e-15);
}
