use milscene_core::gradcheck::{grad_check, layer_suite, model_check};
use milscene_core::layers::{Conv2d, Mode};
use milscene_core::{Head, ModelConfig, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;

#[test]
fn every_layer_passes_over_five_seeds() {
    for seed in 0..5 {
        for c in layer_suite(seed, H).unwrap() {
            assert!(c.checked > 0, "{} checked nothing", c.name);
            assert!(c.max_relative_error < 1e-4, "seed {seed}: {} at {:.3e}", c.name, c.max_relative_error);
        }
    }
}

#[test]
fn suite_covers_every_layer_kind() {
    let names: Vec<String> = layer_suite(0, H).unwrap().into_iter().map(|c| c.name).collect();
    for want in ["conv2d", "conv1d_dilated", "batchnorm_train", "sd_head", "md_head", "max_aggregator", "weighted_bce"] {
        assert!(names.iter().any(|n| n == want), "missing {want} in {names:?}");
    }
}

#[test]
fn conv2d_is_tighter_than_the_suite_bound() {
    // a linear layer has no kinks, so the only error is truncation
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut conv = Conv2d::new(2, 3, (3, 3), (1, 1), &mut rng);
    let x = Tensor::from_fn(&[2, 2, 6, 7], |_| rng.random_range(-1.0..1.0));
    let r = Tensor::from_fn(&[2, 3, 6, 7], |_| rng.random_range(-1.0..1.0));
    conv.forward(&x).unwrap();
    let gx = conv.backward(&r).unwrap();
    let err = grad_check(|p| conv.infer(p)?.dot(&r), &x, &gx, H).unwrap();
    assert!(err < 1e-6, "{err:.3e}");
}

#[test]
fn whole_reduced_networks_pass() {
    // MTS needs at least 9 instances; 80 frames give 10
    let cases = [(Head::Single, false, None), (Head::Multi, false, None), (Head::Single, true, Some(48)), (Head::Multi, true, Some(48))];
    for (head, mts, limit) in cases {
        let frames = if mts { 80 } else { 40 };
        let config = ModelConfig::reduced(4, 40, frames).with_head(head, 3).with_mts(mts).with_seed(2);
        let c = model_check(&config, 2, H, limit, 1e-4).unwrap();
        assert!(c.max_relative_error < 1e-4, "{}: {:.3e}", c.name, c.max_relative_error);
        // kinks are rare; a systematic error would refine nearly everything
        assert!(c.refined * 100 < c.checked, "{}: {} of {} refined", c.name, c.refined, c.checked);
    }
}

#[test]
fn eval_mode_batchnorm_is_affine() {
    let mut bn = milscene_core::layers::BatchNorm::new(2);
    let x = Tensor::from_fn(&[3, 2, 4], |i| (i as f64 * 0.37).sin());
    bn.forward(&x, Mode::Train).unwrap();
    let r = Tensor::from_fn(&[3, 2, 4], |i| (i as f64 * 0.11).cos());
    bn.forward(&x, Mode::Eval).unwrap();
    let gx = bn.backward(&r).unwrap();
    let err = grad_check(|p| bn.infer(p)?.dot(&r), &x, &gx, H).unwrap();
    assert!(err < 1e-7, "{err:.3e}");
}
