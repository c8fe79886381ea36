use std::path::Path;
use std::process::{Command, Output};

fn milscene(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_milscene"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

const TINY: &str = "head = md
detectors = 2
block_channels = 4, 8, 16
instance_dim = 8
epochs = 2
batch_size = 16
synth_train_clips = 24
synth_val_clips = 12
out = run
";

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(milscene(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(milscene(&["--version"], dir.path()).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(milscene(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(milscene(&["train"], dir.path()).status.code(), Some(1));
    assert_eq!(milscene(&["gradcheck", "--scale", "huge"], dir.path()).status.code(), Some(1));
    assert_eq!(milscene(&["train", "--config", "nope.cfg"], dir.path()).status.code(), Some(1));
}

#[test]
fn train_evaluate_inspect_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), TINY).unwrap();
    let out = milscene(&["train", "--config", "run.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let log = std::fs::read_to_string(dir.path().join("run/train_log.tsv")).unwrap();
    assert_eq!(log.lines().count(), 3);
    assert!(log.starts_with("epoch\ttrain_loss\tval_accuracy\tlearning_rate\n"));
    assert!(dir.path().join("run/resolved.cfg").is_file());

    let out = milscene(&["evaluate", "--checkpoint", "run/checkpoint.arr", "--out", "ev"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let printed = String::from_utf8_lossy(&out.stdout).to_string();
    let csv = std::fs::read_to_string(dir.path().join("ev/confusion.csv")).unwrap();
    // accuracy printed equals the confusion trace over the total
    let rows: Vec<Vec<u64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').skip(1).take(4).map(|v| v.parse().unwrap()).collect())
        .collect();
    let trace: u64 = (0..4).map(|i| rows[i][i]).sum();
    let total: u64 = rows.iter().flatten().sum();
    assert!(printed.contains(&format!("accuracy {:.4}", trace as f64 / total as f64)), "{printed}");
    assert!(dir.path().join("ev/confusion.svg").is_file());

    let out = milscene(&["inspect", "--checkpoint", "run/checkpoint.arr", "--clip", "val-00002", "--svg", "i.svg"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("argmax_instance"));
    assert!(std::fs::read_to_string(dir.path().join("i.svg")).unwrap().starts_with("<svg"));

    let out = milscene(&["inspect", "--checkpoint", "run/checkpoint.arr", "--clip", "nowhere-7"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn training_is_reproducible_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), TINY).unwrap();
    let read = |p: &str| std::fs::read(dir.path().join(p)).unwrap();
    let mut runs = Vec::new();
    for _ in 0..2 {
        let o = milscene(&["train", "--config", "run.cfg"], dir.path());
        assert_eq!(o.status.code(), Some(0));
        runs.push((read("run/train_log.tsv"), read("run/checkpoint.arr")));
    }
    assert!(runs[0] == runs[1], "second run differs");
}

#[test]
fn synth_then_train_on_features() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("spec.cfg"), "synth_train_clips = 16\nsynth_val_clips = 8\n").unwrap();
    let out = milscene(&["synth", "--spec", "spec.cfg", "--out", "syn"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    for f in ["features.arr", "index.tsv", "train.tsv", "val.tsv", "truth.csv", "spec.cfg"] {
        assert!(dir.path().join("syn").join(f).is_file(), "{f}");
    }
    let truth = std::fs::read_to_string(dir.path().join("syn/truth.csv")).unwrap();
    assert!(truth.starts_with("clip_id,class,instance\n"));
    std::fs::write(
        dir.path().join("f.cfg"),
        "data = features\nfeatures = syn\ntrain_meta = syn/train.tsv\nval_meta = syn/val.tsv\n\
         block_channels = 4, 8, 16\ninstance_dim = 8\nepochs = 1\nbatch_size = 8\nout = run\n",
    )
    .unwrap();
    let out = milscene(&["train", "--config", "f.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = milscene(&["evaluate", "--checkpoint", "run/checkpoint.arr", "--meta", "syn/val.tsv", "--out", "ev"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("(8 clips)"));
}

#[test]
fn sweep_writes_one_row_per_k() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), TINY.replace("epochs = 2", "epochs = 1")).unwrap();
    let out = milscene(&["sweep-k", "--config", "run.cfg", "--k-list", "2,4,6,8,10"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let table = std::fs::read_to_string(dir.path().join("run/sweep_k.tsv")).unwrap();
    assert_eq!(table.lines().count(), 6);
    assert!(dir.path().join("run/sweep_k.svg").is_file());
    assert_eq!(milscene(&["sweep-k", "--config", "run.cfg", "--k-list", "5..2"], dir.path()).status.code(), Some(1));
}

#[test]
fn featurize_reports_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("m.tsv"), "x.wav\tpark\n").unwrap();
    let out = milscene(&["featurize", "--audio-root", ".", "--meta", "m.tsv", "--out", "f"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}
