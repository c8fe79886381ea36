use milscene_core::data::{
    generate_split, generate_synthetic, localization_score, InstanceTruth, Split, SyntheticSpec,
};
use milscene_core::model::Prediction;
use milscene_core::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small(seed: u64) -> SyntheticSpec {
    SyntheticSpec { train_clips: 41, val_clips: 23, seed, ..SyntheticSpec::default() }
}

/// Prediction whose instance scores are `1` on `hot` instances of `class`.
fn prediction(classes: usize, instances: usize, class: usize, argmax: usize) -> Prediction {
    let mut scores = Tensor::full(&[classes, instances], 0.1);
    scores.set(&[class, argmax], 0.9);
    let mut bag = vec![0.1; classes];
    bag[class] = 0.9;
    let mut am = vec![0; classes];
    am[class] = argmax;
    Prediction { bag_scores: bag, instance_scores: scores, argmax: am }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn clips_are_pure_and_positive(seed in 0u64..1000, classes in 2usize..6, epc in 1usize..3) {
        let spec = SyntheticSpec { classes, events_per_class: epc, ..small(seed) };
        let (train, val) = generate_synthetic(&spec).unwrap();
        for set in [&train, &val] {
            for (t, &label) in set.truth.iter().zip(&set.data.labels) {
                prop_assert_eq!(t.active_classes(), vec![label]);
            }
        }
    }

    #[test]
    fn splits_are_label_balanced(seed in 0u64..1000, classes in 2usize..7, n in 2usize..60) {
        let spec = SyntheticSpec { classes, train_clips: n, ..small(seed) };
        let set = generate_split(&spec, Split::Train).unwrap();
        let counts = set.data.class_counts();
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        prop_assert!(hi - lo <= 1, "{:?}", counts);
    }

    #[test]
    fn marked_instances_overlap_their_event(start in 0usize..80, duration in 1usize..20) {
        let mut t = InstanceTruth::new(2, 12);
        t.mark_event(1, start, duration, 8);
        for j in t.positives(1) {
            let (lo, hi) = (j * 8, j * 8 + 8);
            prop_assert!(start < hi && start + duration > lo);
        }
        prop_assert_eq!(t.count(0), 0);
    }
}

#[test]
fn generation_is_reproducible_and_seed_dependent() {
    let a = generate_synthetic(&small(7)).unwrap();
    let b = generate_synthetic(&small(7)).unwrap();
    let c = generate_synthetic(&small(8)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.0.data.features, c.0.data.features);
}

#[test]
fn train_and_validation_clips_differ() {
    let (train, val) = generate_synthetic(&small(1)).unwrap();
    for x in &val.data.features {
        assert!(train.data.features.iter().all(|y| y != x));
    }
}

#[test]
fn perfect_localizer_scores_one() {
    let (_, val) = generate_synthetic(&small(2)).unwrap();
    let (c, m) = (val.truth[0].classes(), val.truth[0].instances());
    let preds: Vec<Prediction> = val
        .truth
        .iter()
        .zip(&val.data.labels)
        .map(|(t, &l)| prediction(c, m, l, t.positives(l).next().unwrap()))
        .collect();
    let report = localization_score(&preds, &val.data.labels, &val.truth).unwrap();
    assert_eq!(report.pooled(), Some(1.0));
    assert_eq!(report.counted.iter().sum::<usize>(), val.data.len());
}

#[test]
fn misclassified_clips_are_not_counted() {
    let (_, val) = generate_synthetic(&small(3)).unwrap();
    let (c, m) = (val.truth[0].classes(), val.truth[0].instances());
    let preds: Vec<Prediction> =
        val.data.labels.iter().map(|&l| prediction(c, m, (l + 1) % c, 0)).collect();
    let report = localization_score(&preds, &val.data.labels, &val.truth).unwrap();
    assert_eq!(report.pooled(), None);
}

#[test]
fn random_argmax_matches_the_positive_fraction() {
    // the chance of hitting a positive instance is the mean positive fraction
    let spec = SyntheticSpec { val_clips: 400, ..small(4) };
    let val = generate_split(&spec, Split::Val).unwrap();
    let m = spec.instances();
    let fraction: f64 = val
        .truth
        .iter()
        .zip(&val.data.labels)
        .map(|(t, &l)| t.count(l) as f64 / m as f64)
        .sum::<f64>()
        / val.truth.len() as f64;
    assert!(fraction > 0.05 && fraction < 0.35, "{fraction}");

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let trials = 20;
    let mut hits = 0usize;
    let mut total = 0usize;
    for _ in 0..trials {
        let preds: Vec<Prediction> =
            val.data.labels.iter().map(|&l| prediction(spec.classes, m, l, rng.random_range(0..m))).collect();
        let r = localization_score(&preds, &val.data.labels, &val.truth).unwrap();
        hits += r.hits.iter().sum::<usize>();
        total += r.counted.iter().sum::<usize>();
    }
    let observed = hits as f64 / total as f64;
    let sigma = (fraction * (1.0 - fraction) / total as f64).sqrt();
    assert!((observed - fraction).abs() < 4.0 * sigma, "observed {observed}, expected {fraction} ± {sigma}");
}

#[test]
fn invalid_specs_are_rejected() {
    let bad = [
        SyntheticSpec { classes: 1, ..SyntheticSpec::default() },
        SyntheticSpec { distinct_per_clip: (0, 1), ..SyntheticSpec::default() },
        SyntheticSpec { event_frames: (10, 200), ..SyntheticSpec::default() },
        SyntheticSpec { classes: 50, ..SyntheticSpec::default() },
    ];
    for spec in bad {
        assert!(generate_synthetic(&spec).is_err(), "{spec:?}");
    }
}
