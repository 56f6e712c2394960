use std::path::PathBuf;

use proptest::prelude::*;
use specadapt::rng::{derive_sample_stream, SampleStream};
use specadapt::spectral::{
    apply_plan, plan_freq_masks, plan_time_masks, plan_time_subs, AugEvent, AugLimits, AugmentationPlan,
    FeatureMatrix, MatrixDims, SubSource,
};
use specadapt_testkit::{naive_apply, RefEvent};

fn to_ref(e: &AugEvent) -> RefEvent {
    match *e {
        AugEvent::TimeMask { t1, t2 } => RefEvent::TimeMask { t1, t2 },
        AugEvent::FreqMask { f1, f2 } => RefEvent::FreqMask { f1, f2 },
        AugEvent::TimeSub { dest_t, src_t, width } => RefEvent::TimeSub { dest_t, src_t, width },
    }
}

fn dims(frames: usize, bins: usize) -> MatrixDims {
    MatrixDims { frames, bins }
}

#[test]
fn plans_follow_documented_draw_order() {
    let limits = AugLimits {
        max_t_width: 50,
        max_f_width: 10,
        max_sub_width: 30,
    };
    let mut stream = derive_sample_stream(7, 0, 0, 0);
    let mut replay = stream.clone();
    let masks = plan_time_masks(2, dims(100, 80), &limits, &mut stream);
    for ev in &masks {
        let w = replay.uniform_inclusive(0, 50);
        let start = replay.uniform_inclusive(0, 99 - w);
        assert_eq!(*ev, AugEvent::TimeMask { t1: start, t2: start + w });
    }
    let subs = plan_time_subs(1, dims(100, 80), &limits, SubSource::Previous, &mut stream);
    let w = replay.uniform_inclusive(1, 30);
    let dest = replay.uniform_inclusive(0, 100 - w);
    let src = replay.uniform_inclusive(0, dest);
    assert_eq!(subs, vec![AugEvent::TimeSub { dest_t: dest, src_t: src, width: w }]);
}

/// Golden plans for seed 7; regenerate with `UPDATE_GOLDEN=1`.
#[test]
fn golden_plans_seed_7() {
    let limits = AugLimits {
        max_t_width: 50,
        max_f_width: 10,
        max_sub_width: 30,
    };
    let d = dims(100, 80);
    let time = plan_time_masks(2, d, &limits, &mut derive_sample_stream(7, 0, 0, 0));
    let freq = plan_freq_masks(2, d, &limits, &mut derive_sample_stream(7, 0, 0, 0));
    let sub = plan_time_subs(1, d, &limits, SubSource::Previous, &mut derive_sample_stream(7, 0, 0, 0));

    for ev in &time {
        let AugEvent::TimeMask { t1, t2 } = *ev else { panic!() };
        assert!(t1 <= t2 && t2 < 100 && t2 - t1 <= 50);
    }
    for ev in &freq {
        let AugEvent::FreqMask { f1, f2 } = *ev else { panic!() };
        assert!(f1 <= f2 && f2 < 80 && f2 - f1 <= 10);
    }
    let AugEvent::TimeSub { dest_t, src_t, width } = sub[0] else { panic!() };
    assert!(src_t <= dest_t && dest_t + width <= 100 && (1..=30).contains(&width));

    let actual = serde_json::json!({ "time_masks": time, "freq_masks": freq, "time_subs": sub });
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/plans_seed7.json");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, serde_json::to_string_pretty(&actual).unwrap() + "\n").unwrap();
    }
    let expected: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(actual, expected);
}

#[test]
fn anywhere_source_can_look_ahead() {
    let limits = AugLimits::default();
    let mut s = SampleStream::from_key(3);
    let events = plan_time_subs(2000, dims(100, 4), &limits, SubSource::Anywhere, &mut s);
    assert!(events
        .iter()
        .any(|e| matches!(*e, AugEvent::TimeSub { dest_t, src_t, .. } if src_t > dest_t)));
    let m = FeatureMatrix::filled(100, 4, 1.0).unwrap();
    apply_plan(&m, &AugmentationPlan::new(events)).unwrap();
}

fn matrix_strategy() -> impl Strategy<Value = FeatureMatrix> {
    (1usize..40, 1usize..24).prop_flat_map(|(t, f)| {
        prop::collection::vec(-50.0f32..50.0, t * f).prop_map(move |v| FeatureMatrix::new(t, f, v).unwrap())
    })
}

fn planned(m: &FeatureMatrix, counts: (usize, usize, usize), seed: u64, limits: AugLimits) -> AugmentationPlan {
    let mut s = SampleStream::from_key(seed);
    let d = m.dims();
    let mut ev = plan_time_masks(counts.0, d, &limits, &mut s);
    ev.extend(plan_freq_masks(counts.1, d, &limits, &mut s));
    ev.extend(plan_time_subs(counts.2, d, &limits, SubSource::Previous, &mut s));
    AugmentationPlan::new(ev)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn plans_are_in_bounds(m in matrix_strategy(), n in 0usize..6, seed: u64,
                           tw in 1usize..60, fw in 1usize..30, sw in 1usize..40) {
        let limits = AugLimits { max_t_width: tw, max_f_width: fw, max_sub_width: sw };
        let plan = planned(&m, (n, n, n), seed, limits);
        prop_assert_eq!(plan.events.len(), 3 * n);
        prop_assert!(plan.validate(m.dims()).is_ok());
        for ev in &plan.events {
            match *ev {
                AugEvent::TimeMask { t1, t2 } => prop_assert!(t2 - t1 <= tw),
                AugEvent::FreqMask { f1, f2 } => prop_assert!(f2 - f1 <= fw),
                AugEvent::TimeSub { dest_t, src_t, width } => {
                    prop_assert!(src_t <= dest_t);
                    prop_assert!(width >= 1 && width <= sw);
                }
            }
        }
    }

    #[test]
    fn apply_matches_naive_reference(m in matrix_strategy(), nt in 0usize..5, nf in 0usize..5,
                                     ns in 0usize..3, seed: u64) {
        let plan = planned(&m, (nt, nf, ns), seed, AugLimits::default());
        let before = m.clone();
        let out = apply_plan(&m, &plan).unwrap();
        prop_assert_eq!(&m, &before);
        let refs: Vec<RefEvent> = plan.events.iter().map(to_ref).collect();
        let want = naive_apply(m.frames(), m.bins(), m.values(), &refs);
        let same_bits = out.values().iter().zip(&want).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same_bits);
    }

    #[test]
    fn same_seed_same_output(m in matrix_strategy(), seed: u64) {
        let a = apply_plan(&m, &planned(&m, (2, 2, 1), seed, AugLimits::default())).unwrap();
        let b = apply_plan(&m, &planned(&m, (2, 2, 1), seed, AugLimits::default())).unwrap();
        prop_assert_eq!(a, b);
    }
}
