//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored; unknown keys are errors. Every
//! run writes the resolved configuration (all keys, defaults filled in)
//! next to its outputs, which is enough to rebuild the model.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use milscene_core::data::SyntheticSpec;
use milscene_core::train::{AdamConfig, LossKind, TrainOptions};
use milscene_core::{Head, ModelConfig};

use crate::error::{config_err, Error, Result};

/// One `key = value` pair and its 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

pub fn parse_entries(text: &str) -> Result<Vec<Entry>> {
    let mut out: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(config_err!("line {}: expected `key = value`, got {raw:?}", i + 1));
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(config_err!("line {}: empty key", i + 1));
        }
        if let Some(prev) = out.iter().find(|e| e.key == key) {
            return Err(config_err!("line {}: `{key}` already set on line {}", i + 1, prev.line));
        }
        out.push(Entry { key: key.to_string(), value: value.trim().to_string(), line: i + 1 });
    }
    Ok(out)
}

fn parse<T: FromStr>(e: &Entry) -> Result<T> {
    e.value
        .parse()
        .map_err(|_| config_err!("line {}: invalid value {:?} for `{}`", e.line, e.value, e.key))
}

fn parse_bool(e: &Entry) -> Result<bool> {
    match e.value.as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(config_err!("line {}: `{}` must be true or false, got {:?}", e.line, e.key, e.value)),
    }
}

fn parse_list<T: FromStr>(e: &Entry) -> Result<Vec<T>> {
    e.value
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|_| config_err!("line {}: invalid list {:?} for `{}`", e.line, e.value, e.key))
}

fn parse_range(e: &Entry) -> Result<(usize, usize)> {
    let v: Vec<usize> = parse_list(e)?;
    match v[..] {
        [a] => Ok((a, a)),
        [a, b] => Ok((a, b)),
        _ => Err(config_err!("line {}: `{}` takes `min, max`", e.line, e.key)),
    }
}

/// Applies one `synth_*` key. Returns false if the key is not a synthetic key.
pub fn apply_synth_key(spec: &mut SyntheticSpec, e: &Entry) -> Result<bool> {
    match e.key.as_str() {
        "synth_classes" => spec.classes = parse(e)?,
        "synth_events_per_class" => spec.events_per_class = parse(e)?,
        "synth_common_templates" => spec.common_templates = parse(e)?,
        "synth_bands" => spec.bands = parse(e)?,
        "synth_frames" => spec.frames = parse(e)?,
        "synth_pool_stages" => spec.pool_stages = parse(e)?,
        "synth_distinct_per_clip" => spec.distinct_per_clip = parse_range(e)?,
        "synth_common_per_clip" => spec.common_per_clip = parse_range(e)?,
        "synth_event_frames" => spec.event_frames = parse_range(e)?,
        "synth_noise" => spec.noise = parse(e)?,
        "synth_amplitude" => spec.amplitude = parse(e)?,
        "synth_overlap" => spec.overlap = parse_bool(e)?,
        "synth_train_clips" => spec.train_clips = parse(e)?,
        "synth_val_clips" => spec.val_clips = parse(e)?,
        "synth_seed" => spec.seed = parse(e)?,
        _ => return Ok(false),
    }
    Ok(true)
}

pub fn synth_text(spec: &SyntheticSpec) -> String {
    let mut s = String::new();
    let r = |(a, b): (usize, usize)| format!("{a}, {b}");
    writeln!(s, "synth_classes = {}", spec.classes).unwrap();
    writeln!(s, "synth_events_per_class = {}", spec.events_per_class).unwrap();
    writeln!(s, "synth_common_templates = {}", spec.common_templates).unwrap();
    writeln!(s, "synth_bands = {}", spec.bands).unwrap();
    writeln!(s, "synth_frames = {}", spec.frames).unwrap();
    writeln!(s, "synth_pool_stages = {}", spec.pool_stages).unwrap();
    writeln!(s, "synth_distinct_per_clip = {}", r(spec.distinct_per_clip)).unwrap();
    writeln!(s, "synth_common_per_clip = {}", r(spec.common_per_clip)).unwrap();
    writeln!(s, "synth_event_frames = {}", r(spec.event_frames)).unwrap();
    writeln!(s, "synth_noise = {:?}", spec.noise).unwrap();
    writeln!(s, "synth_amplitude = {:?}", spec.amplitude).unwrap();
    writeln!(s, "synth_overlap = {}", spec.overlap).unwrap();
    writeln!(s, "synth_train_clips = {}", spec.train_clips).unwrap();
    writeln!(s, "synth_val_clips = {}", spec.val_clips).unwrap();
    writeln!(s, "synth_seed = {}", spec.seed).unwrap();
    s
}

/// Parses a file holding only `synth_*` keys.
pub fn parse_synth_spec(text: &str) -> Result<SyntheticSpec> {
    let mut spec = SyntheticSpec::default();
    for e in parse_entries(text)? {
        if !apply_synth_key(&mut spec, &e)? {
            return Err(config_err!("line {}: unknown key `{}`", e.line, e.key));
        }
    }
    spec.validate()?;
    Ok(spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    /// Generated in memory from the `synth_*` keys.
    Synthetic,
    /// A feature store plus train/validation meta files.
    Features,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub head: Head,
    pub mts: bool,
    pub detectors: usize,
    pub block_channels: Vec<usize>,
    pub instance_dim: usize,
    pub seed: u64,
    /// Filled in from the data when absent.
    pub classes: Option<usize>,
    pub bands: Option<usize>,
    pub frames: Option<usize>,
    pub class_names: Option<Vec<String>>,

    pub loss: String,
    /// Positive weight for `wbce`; `C - 1` when absent.
    pub alpha: Option<f64>,
    pub adam: AdamConfig,
    pub decay: f64,
    pub patience: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub eval_batch: usize,

    pub data: DataSource,
    pub synth: SyntheticSpec,
    pub features: Option<PathBuf>,
    pub train_meta: Option<PathBuf>,
    pub val_meta: Option<PathBuf>,
    /// Keep only meta entries whose path contains this pattern.
    pub device_filter: Option<String>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let model = ModelConfig::default();
        let train = TrainOptions::default();
        Self {
            head: model.head,
            mts: model.mts,
            detectors: model.detectors,
            block_channels: model.block_channels,
            instance_dim: model.instance_dim,
            seed: 0,
            classes: None,
            bands: None,
            frames: None,
            class_names: None,
            loss: "wbce".into(),
            alpha: None,
            adam: train.adam,
            decay: train.decay,
            patience: train.patience,
            epochs: train.epochs,
            batch_size: train.batch_size,
            eval_batch: 64,
            data: DataSource::Synthetic,
            synth: SyntheticSpec::default(),
            features: None,
            train_meta: None,
            val_meta: None,
            device_filter: None,
            out: PathBuf::from("runs/default"),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for e in parse_entries(text)? {
            if apply_synth_key(&mut c.synth, &e)? {
                continue;
            }
            match e.key.as_str() {
                "head" => c.head = e.value.parse().map_err(|err| config_err!("line {}: {err}", e.line))?,
                "mts" => c.mts = parse_bool(&e)?,
                "detectors" => c.detectors = parse(&e)?,
                "block_channels" => c.block_channels = parse_list(&e)?,
                "instance_dim" => c.instance_dim = parse(&e)?,
                "seed" => c.seed = parse(&e)?,
                "classes" => c.classes = Some(parse(&e)?),
                "bands" => c.bands = Some(parse(&e)?),
                "frames" => c.frames = Some(parse(&e)?),
                "class_names" => c.class_names = Some(e.value.split(',').map(|s| s.trim().to_string()).collect()),
                "loss" => match e.value.as_str() {
                    "wbce" | "ce" => c.loss = e.value.clone(),
                    _ => return Err(config_err!("line {}: loss must be wbce or ce", e.line)),
                },
                "alpha" => c.alpha = Some(parse(&e)?),
                "lr" => c.adam.lr = parse(&e)?,
                "beta1" => c.adam.beta1 = parse(&e)?,
                "beta2" => c.adam.beta2 = parse(&e)?,
                "adam_eps" => c.adam.eps = parse(&e)?,
                "decay" => c.decay = parse(&e)?,
                "patience" => c.patience = parse(&e)?,
                "epochs" => c.epochs = parse(&e)?,
                "batch_size" => c.batch_size = parse(&e)?,
                "eval_batch" => c.eval_batch = parse(&e)?,
                "data" => {
                    c.data = match e.value.as_str() {
                        "synthetic" => DataSource::Synthetic,
                        "features" => DataSource::Features,
                        _ => return Err(config_err!("line {}: data must be synthetic or features", e.line)),
                    }
                }
                "features" => c.features = Some(PathBuf::from(&e.value)),
                "train_meta" => c.train_meta = Some(PathBuf::from(&e.value)),
                "val_meta" => c.val_meta = Some(PathBuf::from(&e.value)),
                "device_filter" => c.device_filter = Some(e.value.clone()),
                "out" => c.out = PathBuf::from(&e.value),
                _ => return Err(config_err!("line {}: unknown key `{}`", e.line, e.key)),
            }
        }
        c.check()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| config_err!("{}: {e}", path.display()))
    }

    fn check(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.eval_batch == 0 {
            return Err(config_err!("epochs, batch_size and eval_batch must be positive"));
        }
        if !(self.adam.lr > 0.0) || !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(config_err!("lr must be positive and decay in (0, 1]"));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0) {
                return Err(config_err!("alpha must be positive, got {a}"));
            }
        }
        if self.data == DataSource::Features
            && (self.features.is_none() || self.train_meta.is_none() || self.val_meta.is_none())
        {
            return Err(config_err!("data = features needs `features`, `train_meta` and `val_meta`"));
        }
        if let (Some(c), Some(names)) = (self.classes, &self.class_names) {
            if names.len() != c {
                return Err(config_err!("{} class names for {c} classes", names.len()));
            }
        }
        Ok(())
    }

    /// Network configuration; needs `classes`, `bands` and `frames` resolved.
    pub fn model_config(&self) -> Result<ModelConfig> {
        let missing = |k: &str| config_err!("`{k}` is not resolved");
        let config = ModelConfig {
            head: self.head,
            mts: self.mts,
            detectors: self.detectors,
            classes: self.classes.ok_or_else(|| missing("classes"))?,
            block_channels: self.block_channels.clone(),
            instance_dim: self.instance_dim,
            bands: self.bands.ok_or_else(|| missing("bands"))?,
            frames: self.frames.ok_or_else(|| missing("frames"))?,
            seed: self.seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn loss_kind(&self, classes: usize) -> LossKind {
        match self.loss.as_str() {
            "ce" => LossKind::CrossEntropy,
            _ => match self.alpha {
                Some(alpha) => LossKind::WeightedBce { alpha },
                None => LossKind::balanced(classes),
            },
        }
    }

    pub fn train_options(&self) -> Result<TrainOptions> {
        let classes = self.classes.ok_or_else(|| config_err!("`classes` is not resolved"))?;
        Ok(TrainOptions {
            epochs: self.epochs,
            batch_size: self.batch_size,
            adam: self.adam,
            decay: self.decay,
            patience: self.patience,
            loss: Some(self.loss_kind(classes)),
        })
    }

    /// Fills in data-derived fields, rejecting values that disagree.
    pub fn resolve(&mut self, classes: usize, bands: usize, frames: usize, names: &[String]) -> Result<()> {
        for (key, slot, value) in [
            ("classes", &mut self.classes, classes),
            ("bands", &mut self.bands, bands),
            ("frames", &mut self.frames, frames),
        ] {
            match slot {
                Some(v) if *v != value => return Err(config_err!("`{key} = {v}` but the data has {value}")),
                _ => *slot = Some(value),
            }
        }
        match &self.class_names {
            Some(n) if n != names => return Err(config_err!("class_names disagree with the data: {n:?} vs {names:?}")),
            _ => self.class_names = Some(names.to_vec()),
        }
        Ok(())
    }

    /// Every key with its current value, in a fixed order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<String>| v.unwrap_or_default();
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        writeln!(s, "# model").unwrap();
        writeln!(s, "head = {}", self.head).unwrap();
        writeln!(s, "mts = {}", self.mts).unwrap();
        writeln!(s, "detectors = {}", self.detectors).unwrap();
        writeln!(s, "block_channels = {}", join(&self.block_channels)).unwrap();
        writeln!(s, "instance_dim = {}", self.instance_dim).unwrap();
        writeln!(s, "seed = {}", self.seed).unwrap();
        for (k, v) in [("classes", self.classes), ("bands", self.bands), ("frames", self.frames)] {
            if let Some(v) = v {
                writeln!(s, "{k} = {v}").unwrap();
            }
        }
        if let Some(names) = &self.class_names {
            writeln!(s, "class_names = {}", names.join(", ")).unwrap();
        }
        writeln!(s, "\n# training").unwrap();
        writeln!(s, "loss = {}", self.loss).unwrap();
        if let Some(a) = self.alpha {
            writeln!(s, "alpha = {a:?}").unwrap();
        }
        writeln!(s, "lr = {:?}", self.adam.lr).unwrap();
        writeln!(s, "beta1 = {:?}", self.adam.beta1).unwrap();
        writeln!(s, "beta2 = {:?}", self.adam.beta2).unwrap();
        writeln!(s, "adam_eps = {:?}", self.adam.eps).unwrap();
        writeln!(s, "decay = {:?}", self.decay).unwrap();
        writeln!(s, "patience = {}", self.patience).unwrap();
        writeln!(s, "epochs = {}", self.epochs).unwrap();
        writeln!(s, "batch_size = {}", self.batch_size).unwrap();
        writeln!(s, "eval_batch = {}", self.eval_batch).unwrap();
        writeln!(s, "\n# data").unwrap();
        match self.data {
            DataSource::Synthetic => writeln!(s, "data = synthetic").unwrap(),
            DataSource::Features => writeln!(s, "data = features").unwrap(),
        }
        for (k, v) in [
            ("features", path(&self.features)),
            ("train_meta", path(&self.train_meta)),
            ("val_meta", path(&self.val_meta)),
            ("device_filter", self.device_filter.clone()),
        ] {
            if v.is_some() {
                writeln!(s, "{k} = {}", opt(v)).unwrap();
            }
        }
        s.push_str(&synth_text(&self.synth));
        writeln!(s, "out = {}", self.out.display()).unwrap();
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_blank_lines() {
        let c = RunConfig::parse("# comment\n\nhead = md   # trailing\nmts = true\n").unwrap();
        assert_eq!(c.head, Head::Multi);
        assert!(c.mts);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = RunConfig::parse("heads = md\n").unwrap_err();
        assert!(err.to_string().contains("unknown key"), "{err}");
    }

    #[test]
    fn duplicate_key_is_rejected() {
        assert!(RunConfig::parse("seed = 1\nseed = 2\n").is_err());
    }

    #[test]
    fn resolved_text_round_trips() {
        let mut c = RunConfig::parse("head = md\ndetectors = 6\nsynth_amplitude = 2.5\nalpha = 3\n").unwrap();
        c.resolve(4, 40, 100, &["a".into(), "b".into(), "c".into(), "d".into()]).unwrap();
        let back = RunConfig::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn resolve_rejects_mismatch() {
        let mut c = RunConfig::parse("classes = 10\n").unwrap();
        assert!(c.resolve(4, 40, 100, &[]).is_err());
    }

    #[test]
    fn features_needs_paths() {
        assert!(RunConfig::parse("data = features\n").is_err());
    }
}
