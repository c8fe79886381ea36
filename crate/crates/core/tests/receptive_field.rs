use milscene_core::layers::{Mode, Module};
use milscene_core::model::Mts;
use milscene_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LEN: usize = 31;

/// Input-gradient magnitude per instance for a unit upstream gradient at
/// output instance `at`, summed over channels.
fn influence(mts: &mut Mts, x: &Tensor, at: usize) -> Vec<f64> {
    let (c, m) = (x.dim(1), x.dim(2));
    mts.forward(x, Mode::Eval).unwrap();
    let mut r = Tensor::zeros(&[1, c, m]);
    for ch in 0..c {
        r.set(&[0, ch, at], 1.0);
    }
    let g = mts.backward(&r).unwrap();
    (0..m).map(|j| (0..c).map(|ch| g.get(&[0, ch, j]).abs()).sum()).collect()
}

fn generic(seed: u64, channels: usize) -> (Mts, Tensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mts = Mts::new(channels, &mut rng).unwrap();
    // positive shifts keep every ReLU open so no path is gated off
    mts.visit_state_mut("", &mut |name, t| {
        if name.ends_with("bn.beta") {
            t.fill(5.0);
        }
    });
    let x = Tensor::from_fn(&[1, channels, LEN], |_| rng.random_range(-1.0..1.0));
    (mts, x)
}

#[test]
fn influence_stops_exactly_beyond_seven() {
    for seed in 0..3 {
        let (mut mts, x) = generic(seed, 4);
        for at in [15, 7, 3, 27] {
            let inf = influence(&mut mts, &x, at);
            for (j, &v) in inf.iter().enumerate() {
                let d = j.abs_diff(at);
                if d > 7 {
                    assert_eq!(v, 0.0, "seed {seed}: output {at} sees input {j}");
                } else {
                    assert!(v > 0.0, "seed {seed}: output {at} misses input {j}");
                }
            }
        }
    }
}

#[test]
fn impulse_response_is_fifteen_wide() {
    let (mts, _) = generic(5, 3);
    let base = Tensor::zeros(&[1, 3, LEN]);
    let mut impulse = base.clone();
    impulse.set(&[0, 1, 15], 1.0);
    let (a, b) = (mts.infer(&base).unwrap(), mts.infer(&impulse).unwrap());
    let changed: Vec<usize> = (0..LEN).filter(|&j| (0..3).any(|c| a.get(&[0, c, j]) != b.get(&[0, c, j]))).collect();
    assert_eq!(changed, (8..=22).collect::<Vec<_>>());
}
