use milscene_core::layers::softmax;
use milscene_core::model::{aggregate, classify, MultiDetector, SingleDetector};
use milscene_core::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scores() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (1usize..4, 1usize..6, 1usize..9).prop_flat_map(|(n, c, m)| {
        (Just(c), Just(m), prop::collection::vec(0.0f64..1.0, n * c * m)).prop_map(move |(c, m, v)| (c, m, v))
    })
}

proptest! {
    #[test]
    fn bag_score_is_the_instance_maximum((c, m, v) in scores()) {
        let n = v.len() / (c * m);
        let out = aggregate(Tensor::new(vec![n, c, m], v.clone()).unwrap()).unwrap();
        for (row, scores) in v.chunks(m).enumerate() {
            let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(out.bag_scores.data()[row], best);
            prop_assert_eq!(scores[out.argmax[row]], best);
            // first index on ties
            prop_assert!(scores[..out.argmax[row]].iter().all(|&s| s < best));
        }
    }

    #[test]
    fn lowering_a_non_argmax_instance_changes_nothing((c, m, v) in scores(), pick in 0usize..64, drop in 0.0f64..1.0) {
        let n = v.len() / (c * m);
        let before = aggregate(Tensor::new(vec![n, c, m], v.clone()).unwrap()).unwrap();
        let i = pick % v.len();
        let row = i / m;
        prop_assume!(i % m != before.argmax[row]);
        let mut w = v.clone();
        w[i] -= drop;
        let after = aggregate(Tensor::new(vec![n, c, m], w).unwrap()).unwrap();
        prop_assert_eq!(after.bag_scores, before.bag_scores);
        prop_assert_eq!(after.argmax, before.argmax);
    }

    #[test]
    fn raising_any_instance_never_lowers_the_bag_score((c, m, v) in scores(), pick in 0usize..64, rise in 0.0f64..1.0) {
        let n = v.len() / (c * m);
        let before = aggregate(Tensor::new(vec![n, c, m], v.clone()).unwrap()).unwrap();
        let mut w = v.clone();
        let i = pick % v.len();
        w[i] += rise;
        let after = aggregate(Tensor::new(vec![n, c, m], w).unwrap()).unwrap();
        for (a, b) in after.bag_scores.data().iter().zip(before.bag_scores.data()) {
            prop_assert!(a >= b);
        }
    }

    #[test]
    fn softmax_columns_sum_to_one(v in prop::collection::vec(-30.0f64..30.0, 12)) {
        let s = softmax(&Tensor::new(vec![1, 4, 3], v).unwrap(), 1).unwrap();
        for j in 0..3 {
            let total: f64 = (0..4).map(|l| s.get(&[0, l, j])).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn multi_detector_columns_sum_to_one() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let head = MultiDetector::new(8, 10, 4, &mut rng).unwrap();
        let bag = Tensor::from_fn(&[2, 8, 7], |_| rng.random_range(-3.0..3.0));
        let y = head.infer(&bag).unwrap();
        for b in 0..2 {
            for j in 0..7 {
                let total: f64 = (0..10).map(|l| y.get(&[b, l, j])).sum();
                assert!((total - 1.0).abs() < 1e-12, "seed {seed}: column sums to {total}");
            }
        }
    }
}

#[test]
fn single_detector_bag_scores_are_unnormalized() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let head = SingleDetector::new(8, 10, &mut rng).unwrap();
    let bag = Tensor::from_fn(&[1, 8, 5], |_| rng.random_range(-2.0..2.0));
    let out = aggregate(head.infer(&bag).unwrap()).unwrap();
    let total = out.bag_scores.sum();
    assert!((total - 1.0).abs() > 0.1, "bag scores sum to {total}");
}

#[test]
fn classification_picks_the_largest_bag_score() {
    assert_eq!(classify(&[0.1, 0.8, 0.3]), 1);
    assert_eq!(classify(&[0.4, 0.4]), 0);
}
