//! Command implementations behind the `milscene` binary.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use milscene_core::data::{generate_split, generate_synthetic, LabeledSet, Split, SyntheticSpec};
use milscene_core::gradcheck::{layer_suite, model_check, Check};
use milscene_core::train::{evaluate as evaluate_model, train_with, Evaluation, TrainOutcome};
use milscene_core::{Head, MilNet, ModelConfig, Tensor};

use crate::checkpoint;
use crate::config::{synth_text, DataSource, RunConfig};
use crate::error::{config_err, format_err, Error, Result};
use crate::features::{featurize as extract, sha256_hex, FeatureStore, FeaturizeReport};
use crate::frontend::{LogMel, MEL_BANDS};
use crate::meta::{load_dcase_meta, load_dcase_meta_with_classes, write_meta, SceneMeta};
use crate::plot;
use crate::report;
use crate::wav::read_wav;

pub const CHECKPOINT: &str = "checkpoint.arr";
pub const RESOLVED: &str = "resolved.cfg";
pub const TRAIN_LOG: &str = "train_log.tsv";

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn featurize(audio_root: &Path, meta: &Path, out: &Path, device_filter: Option<&str>, rate: u32) -> Result<FeaturizeReport> {
    let mut meta = load_dcase_meta(meta, Some(audio_root))?;
    if let Some(pattern) = device_filter {
        meta.filter_device(pattern);
    }
    if meta.is_empty() {
        return Err(format_err!("no meta entries left to featurize"));
    }
    extract(audio_root, &meta, out, rate, MEL_BANDS)
}

/// Materializes a synthetic dataset: a feature store holding both splits,
/// `train.tsv` / `val.tsv` meta files, `truth.csv` and the resolved spec.
pub fn synth(spec: &SyntheticSpec, out: &Path) -> Result<()> {
    spec.validate()?;
    create_dir(out)?;
    let (train, val) = generate_synthetic(spec)?;
    let spec_text = synth_text(spec);
    let mut store = FeatureStore::default();
    let mut ids = Vec::new();
    let mut truth = Vec::new();
    for (split, set) in [("train", &train), ("val", &val)] {
        let mut rows = Vec::with_capacity(set.data.len());
        for (i, id) in set.data.ids.iter().enumerate() {
            let hash = sha256_hex(format!("{spec_text}{id}").as_bytes());
            store.insert(id.clone(), hash, set.data.features[i].clone());
            rows.push((id.clone(), set.data.class_names[set.data.labels[i]].clone()));
        }
        write_meta(out.join(format!("{split}.tsv")), &rows)?;
        ids.extend(set.data.ids.iter().cloned());
        truth.extend(set.truth.iter().cloned());
    }
    store.save(out)?;
    write(&out.join("truth.csv"), report::truth_csv(&ids, &truth))?;
    write(&out.join("spec.cfg"), spec_text)
}

/// Train and validation sets named by the config; fills in the
/// data-derived config fields.
pub fn load_data(config: &mut RunConfig) -> Result<(LabeledSet, LabeledSet)> {
    let (train, val) = match config.data {
        DataSource::Synthetic => {
            let (t, v) = generate_synthetic(&config.synth)?;
            (t.data, v.data)
        }
        DataSource::Features => {
            let missing = |k: &str| config_err!("`{k}` is required for data = features");
            let store = FeatureStore::open(config.features.as_ref().ok_or_else(|| missing("features"))?)?;
            let mut train_meta = load_dcase_meta(config.train_meta.as_ref().ok_or_else(|| missing("train_meta"))?, None)?;
            let mut val_meta = load_dcase_meta_with_classes(
                config.val_meta.as_ref().ok_or_else(|| missing("val_meta"))?,
                None,
                &train_meta.class_names,
            )?;
            if let Some(p) = &config.device_filter {
                train_meta.filter_device(p);
                val_meta.filter_device(p);
            }
            (store.labeled(&train_meta)?, store.labeled(&val_meta)?)
        }
    };
    let (bands, frames) = train.feature_shape();
    if val.feature_shape() != (bands, frames) {
        return Err(format_err!("train features are {bands}x{frames}, validation {:?}", val.feature_shape()));
    }
    config.resolve(train.classes(), bands, frames, &train.class_names)?;
    Ok((train, val))
}

/// Trains per the config, writing the resolved config, the training log
/// and the best checkpoint into `config.out`.
pub fn train(config: &RunConfig) -> Result<(RunConfig, TrainOutcome)> {
    let mut config = config.clone();
    let (train_set, val_set) = load_data(&mut config)?;
    let out = config.out.clone();
    create_dir(&out)?;
    write(&out.join(RESOLVED), config.to_text())?;
    let log_path = out.join(TRAIN_LOG);
    let mut log_file = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    writeln!(log_file, "{}", report::LOG_HEADER).map_err(|e| Error::io(&log_path, e))?;
    let mut io_error = None;
    let outcome = train_with(config.model_config()?, &train_set, &val_set, &config.train_options()?, |r| {
        log::info!(
            "epoch {:>3}  loss {:.5}  val acc {:.4}  lr {:.3e}",
            r.epoch,
            r.train_loss,
            r.val_accuracy,
            r.learning_rate
        );
        if io_error.is_none() {
            if let Err(e) = writeln!(log_file, "{}", report::log_line(r)) {
                io_error = Some(e);
            }
        }
    })?;
    if let Some(e) = io_error {
        return Err(Error::io(&log_path, e));
    }
    checkpoint::save(out.join(CHECKPOINT), &outcome.best, &config)?;
    Ok((config, outcome))
}

/// Evaluation set for a checkpoint: the given meta file against a feature
/// store, or the regenerated synthetic validation split.
pub fn evaluation_set(config: &RunConfig, meta: Option<&Path>, features: Option<&Path>) -> Result<LabeledSet> {
    let names = config.class_names.clone().ok_or_else(|| config_err!("checkpoint config lacks class_names"))?;
    match meta {
        Some(meta) => {
            let features = features
                .map(Path::to_path_buf)
                .or_else(|| config.features.clone())
                .ok_or_else(|| config_err!("--features is required (the checkpoint names no feature store)"))?;
            let mut meta: SceneMeta = load_dcase_meta_with_classes(meta, None, &names)?;
            if let Some(p) = &config.device_filter {
                meta.filter_device(p);
            }
            FeatureStore::open(features)?.labeled(&meta)
        }
        None if config.data == DataSource::Synthetic => Ok(generate_split(&config.synth, Split::Val)?.data),
        None => Err(config_err!("--meta is required for a checkpoint trained on features")),
    }
}

/// Evaluates and writes `confusion.csv`, `confusion.svg` and
/// `predictions.tsv` into `out`.
pub fn evaluate(model: &MilNet, config: &RunConfig, set: &LabeledSet, out: &Path) -> Result<Evaluation> {
    let eval = evaluate_model(model, set, config.eval_batch)?;
    create_dir(out)?;
    write(&out.join("confusion.csv"), report::confusion_csv(&eval.confusion, &set.class_names))?;
    write(&out.join("confusion.svg"), plot::confusion_svg(&eval.confusion, &set.class_names))?;
    let mut tsv = String::from("id\ttrue\tpredicted\n");
    for ((id, &l), p) in set.ids.iter().zip(&set.labels).zip(&eval.predictions) {
        tsv.push_str(&format!("{id}\t{}\t{}\n", set.class_names[l], set.class_names[p.class()]));
    }
    write(&out.join("predictions.tsv"), tsv)?;
    Ok(eval)
}

/// Parses `2..10` (inclusive, step 1), `2..10:2` or `2,4,6`.
pub fn parse_k_list(s: &str) -> Result<Vec<usize>> {
    let bad = || config_err!("invalid K list {s:?} (use 2..10, 2..10:2 or 2,4,6)");
    let ks: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let (b, step) = match b.split_once(':') {
            Some((b, st)) => (b, st.trim().parse::<usize>().map_err(|_| bad())?),
            None => (b, 1),
        };
        let (a, b) = (a.trim().parse::<usize>().map_err(|_| bad())?, b.trim().parse::<usize>().map_err(|_| bad())?);
        if step == 0 || a > b {
            return Err(bad());
        }
        (a..=b).step_by(step).collect()
    } else {
        s.split(',').map(|k| k.trim().parse()).collect::<Result<_, _>>().map_err(|_| bad())?
    };
    if ks.is_empty() || ks.contains(&0) {
        return Err(bad());
    }
    Ok(ks)
}

/// Trains the multi-detector variant once per `K` (same seed), writing
/// each run under `out/k<K>` plus `sweep_k.tsv` and `sweep_k.svg`.
pub fn sweep_k(config: &RunConfig, ks: &[usize]) -> Result<Vec<(usize, f64)>> {
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let mut c = config.clone();
        c.head = Head::Multi;
        c.detectors = k;
        c.out = config.out.join(format!("k{k}"));
        let (_, outcome) = train(&c)?;
        log::info!("K = {k}: best validation accuracy {:.4}", outcome.best_accuracy);
        rows.push((k, outcome.best_accuracy));
    }
    create_dir(&config.out)?;
    write(&config.out.join("sweep_k.tsv"), report::sweep_table(&rows))?;
    let points: Vec<(f64, f64)> = rows.iter().map(|&(k, a)| (k as f64, a)).collect();
    write(
        &config.out.join("sweep_k.svg"),
        plot::line_svg(&points, "Validation accuracy by detectors per class", "K", "accuracy"),
    )?;
    Ok(rows)
}

/// Small: per-layer checks plus all four variants on a reduced network.
/// Full: the same layers plus the default-size network, sampling a few
/// coordinates per tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Small,
    Full,
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "small" => Ok(Scale::Small),
            "full" => Ok(Scale::Full),
            _ => Err(config_err!("scale must be small or full, got {s:?}")),
        }
    }
}

pub const GRADCHECK_STEP: f64 = 1e-5;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

pub fn gradcheck(scale: Scale, seed: u64) -> Result<Vec<Check>> {
    let mut checks = layer_suite(seed, GRADCHECK_STEP)?;
    let variants = [(Head::Single, false), (Head::Single, true), (Head::Multi, false), (Head::Multi, true)];
    for (head, mts) in variants {
        let (config, limit) = match scale {
            // MTS needs at least 9 instances: 80 frames give 10
            Scale::Small => {
                let frames = if mts { 80 } else { 40 };
                (ModelConfig::reduced(4, 40, frames), None)
            }
            Scale::Full => (ModelConfig::default(), Some(4)),
        };
        let config = config.with_head(head, 4).with_mts(mts).with_seed(seed);
        checks.push(model_check(&config, 2, GRADCHECK_STEP, limit, GRADCHECK_TOLERANCE)?);
    }
    Ok(checks)
}

/// Per-class report for one clip.
#[derive(Debug, Clone)]
pub struct Inspection {
    pub features: Tensor,
    pub prediction: milscene_core::Prediction,
    pub class_names: Vec<String>,
    /// Input frames per instance.
    pub stride: usize,
}

/// Loads a clip by feature-store id or from a WAV file and runs the model.
pub fn inspect(model: &MilNet, config: &RunConfig, clip: &str, features: Option<&Path>) -> Result<Inspection> {
    let x = if clip.ends_with(".wav") || clip.ends_with(".WAV") {
        let audio = read_wav(clip)?;
        LogMel::new(audio.sample_rate, model.config().bands)?.compute(&audio)?
    } else {
        let dir: PathBuf = match features.map(Path::to_path_buf).or_else(|| config.features.clone()) {
            Some(d) => d,
            None if config.data == DataSource::Synthetic => {
                // synthetic ids look like `val-00012`
                let (split, index) = clip
                    .split_once('-')
                    .and_then(|(s, i)| Some((s, i.parse::<usize>().ok()?)))
                    .ok_or_else(|| config_err!("{clip:?} is neither a WAV path nor a synthetic clip id"))?;
                let split = match split {
                    "train" => Split::Train,
                    "val" => Split::Val,
                    _ => return Err(config_err!("unknown split in {clip:?}")),
                };
                let (x, _, _) = milscene_core::data::generate_clip(&config.synth, split, index)?;
                return finish(model, config, x);
            }
            None => return Err(config_err!("--features is required to look up clip {clip:?}")),
        };
        FeatureStore::open(&dir)?
            .get(clip)
            .cloned()
            .ok_or_else(|| format_err!("clip {clip:?} is not in {}", dir.display()))?
    };
    finish(model, config, x)
}

fn finish(model: &MilNet, config: &RunConfig, x: Tensor) -> Result<Inspection> {
    let want = (model.config().bands, model.config().frames);
    if (x.dim(0), x.dim(1)) != want {
        return Err(format_err!("clip features are {:?}, model expects {want:?}", x.shape()));
    }
    let prediction = model.predict(&x)?;
    let names = config
        .class_names
        .clone()
        .unwrap_or_else(|| (0..model.config().classes).map(|l| format!("class{l}")).collect());
    Ok(Inspection { features: x, prediction, class_names: names, stride: model.config().instance_stride() })
}

/// Hop between feature frames, in seconds (40 ms frames, 50% hop).
pub const HOP_SECS: f64 = 0.020;

impl Inspection {
    pub fn render_text(&self) -> String {
        let p = &self.prediction;
        let mut s = String::new();
        let class = p.class();
        s.push_str(&format!("predicted: {}\n\n", self.class_names[class]));
        s.push_str("class\tbag_score\targmax_instance\tframes\tseconds\n");
        for (l, name) in self.class_names.iter().enumerate() {
            let j = p.argmax[l];
            let (a, b) = (j * self.stride, (j + 1) * self.stride);
            s.push_str(&format!(
                "{name}\t{:.6}\t{j}\t{a}-{b}\t{:.2}-{:.2}\n",
                p.bag_scores[l],
                a as f64 * HOP_SECS,
                b as f64 * HOP_SECS
            ));
        }
        s.push_str("\ninstance scores (rows: classes, columns: instances)\n");
        let m = p.instance_scores.dim(1);
        for (l, name) in self.class_names.iter().enumerate() {
            s.push_str(name);
            for j in 0..m {
                s.push_str(&format!("\t{:.4}", p.instance_scores.get(&[l, j])));
            }
            s.push('\n');
        }
        s
    }

    pub fn render_svg(&self) -> String {
        plot::instance_svg(&self.features, &self.prediction.instance_scores, &self.prediction.argmax, &self.class_names, self.stride)
    }
}
