use milscene_core::data::{generate_synthetic, SyntheticSpec};
use milscene_core::layers::Module;
use milscene_core::train::{evaluate, train, TrainOptions};
use milscene_core::{Head, MilNet, ModelConfig};

fn state(net: &MilNet) -> Vec<(String, Vec<u64>)> {
    let mut out = Vec::new();
    net.visit_state("", &mut |name, t| out.push((name.to_string(), t.data().iter().map(|v| v.to_bits()).collect())));
    out
}

fn run(seed: u64) -> (Vec<[u64; 3]>, Vec<(String, Vec<u64>)>) {
    let spec = SyntheticSpec { train_clips: 24, val_clips: 12, ..SyntheticSpec::default() };
    let (tr, va) = generate_synthetic(&spec).unwrap();
    let config = ModelConfig::reduced(4, 40, 100).with_head(Head::Multi, 2).with_mts(true).with_seed(seed);
    let opts = TrainOptions { epochs: 3, batch_size: 8, ..TrainOptions::default() };
    let out = train(config, &tr.data, &va.data, &opts).unwrap();
    let log = out
        .log
        .iter()
        .map(|r| [r.train_loss.to_bits(), r.val_accuracy.to_bits(), r.learning_rate.to_bits()])
        .collect();
    (log, state(&out.best))
}

#[test]
fn same_seed_gives_bit_identical_runs() {
    assert_eq!(run(5), run(5));
}

#[test]
fn different_seeds_diverge() {
    assert_ne!(run(5).1, run(6).1);
}

#[test]
fn evaluation_ignores_batch_size() {
    let spec = SyntheticSpec { train_clips: 8, val_clips: 13, ..SyntheticSpec::default() };
    let (_, va) = generate_synthetic(&spec).unwrap();
    let net = MilNet::new(ModelConfig::reduced(4, 40, 100)).unwrap();
    let a = evaluate(&net, &va.data, 1).unwrap();
    let b = evaluate(&net, &va.data, 5).unwrap();
    assert_eq!(a.confusion, b.confusion);
    assert_eq!(a.predictions, b.predictions);
}
