use proptest::prelude::*;
use specadapt::ibf::IbfParams;
use specadapt::policy::{
    counts_from_lambda, hybrid_normalize, rank_policy, BatchLosses, ClipSpread, CountMultipliers, CountPath,
};
use specadapt_testkit::hybrid_reference;

fn losses() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..100.0, 2..64)
}

#[test]
fn std_dev_option_matches_reference() {
    let l = vec![0.5, 3.0, 3.2, 2.9, 40.0, 3.1];
    let t = hybrid_normalize(&BatchLosses::new(l.clone()).unwrap(), &IbfParams::default(), ClipSpread::StdDev)
        .unwrap();
    let r = hybrid_reference(&l, true, |x| x);
    assert_eq!(t.l_clipped, r.clipped);
    assert_eq!(t.lambda, r.lambda);
    assert!(t.l_clipped[4] < 40.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn lambda_decreases_with_loss(l in losses()) {
        let t = hybrid_normalize(&BatchLosses::new(l.clone()).unwrap(), &IbfParams::default(), ClipSpread::Variance).unwrap();
        for i in 0..l.len() {
            for j in 0..l.len() {
                if l[i] <= l[j] {
                    prop_assert!(t.lambda[i] >= t.lambda[j]);
                }
                if t.l_clipped[i] < t.l_clipped[j] {
                    prop_assert!(t.lambda[i] > t.lambda[j]);
                }
            }
        }
    }

    #[test]
    fn ranges_and_extremes(l in losses(), s in 0.5f64..10.0, a in 0.05f64..0.95) {
        let p = IbfParams::new(s, a).unwrap();
        let t = hybrid_normalize(&BatchLosses::new(l.clone()).unwrap(), &p, ClipSpread::Variance).unwrap();
        for i in 0..l.len() {
            prop_assert!((0.0..=1.0).contains(&t.l_minmax[i]));
            prop_assert!((0.0..=1.0).contains(&t.lambda[i]));
            prop_assert!(t.l_clipped[i] >= t.l_mean - 2.0 * t.l_var);
            prop_assert!(t.l_clipped[i] <= t.l_mean + 2.0 * t.l_var);
        }
        let max = t.l_meannorm.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = t.l_meannorm.iter().copied().fold(f64::INFINITY, f64::min);
        if max > min {
            let lo = t.l_clipped.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = t.l_clipped.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let i_lo = t.l_clipped.iter().position(|&v| v == lo).unwrap();
            let i_hi = t.l_clipped.iter().position(|&v| v == hi).unwrap();
            prop_assert_eq!(t.lambda[i_lo], 1.0);
            prop_assert_eq!(t.lambda[i_hi], 0.0);
        }
    }

    #[test]
    fn ratio_step_is_open_unit_interval_for_positive_losses(l in prop::collection::vec(0.01f64..100.0, 1..32)) {
        let t = hybrid_normalize(&BatchLosses::new(l).unwrap(), &IbfParams::default(), ClipSpread::Variance).unwrap();
        prop_assert!(t.l_meannorm.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn rank_policy_is_shift_invariant(l in losses(), shift in 0.0f64..1000.0) {
        let p = IbfParams::default();
        let shifted: Vec<f64> = l.iter().map(|v| v + shift).collect();
        let a = rank_policy(&BatchLosses::new(l).unwrap(), &p).unwrap();
        let b = rank_policy(&BatchLosses::new(shifted).unwrap(), &p).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn counts_monotone(l1 in 0.0f64..=1.0, l2 in 0.0f64..=1.0) {
        let m = CountMultipliers::default();
        let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
        let a = counts_from_lambda(lo, CountPath::Adaptive, &m).unwrap();
        let b = counts_from_lambda(hi, CountPath::Adaptive, &m).unwrap();
        prop_assert!(a.n_time_mask <= b.n_time_mask);
        prop_assert!(a.n_freq_mask <= b.n_freq_mask);
        prop_assert!(a.n_time_sub <= b.n_time_sub);
        prop_assert!(b.n_time_mask <= 4 && b.n_freq_mask <= 4 && b.n_time_sub <= 2);
    }
}
