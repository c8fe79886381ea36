//! Feature stores: `features.arr` (one array per clip, named by clip id)
//! plus `index.tsv` mapping each id to the SHA-256 of its source bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use milscene_core::data::LabeledSet;
use milscene_core::Tensor;
use sha2::{Digest, Sha256};

use crate::container::ArrayFile;
use crate::error::{format_err, Error, Result};
use crate::frontend::LogMel;
use crate::meta::SceneMeta;
use crate::wav::read_wav;

pub const ARRAYS: &str = "features.arr";
pub const INDEX: &str = "index.tsv";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureStore {
    /// Clip id to (source hash, features `[bands, frames]`).
    pub clips: BTreeMap<String, (String, Tensor)>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        write!(s, "{b:02x}").unwrap();
        s
    })
}

impl FeatureStore {
    pub fn insert(&mut self, id: impl Into<String>, hash: impl Into<String>, features: Tensor) {
        self.clips.insert(id.into(), (hash.into(), features));
    }

    pub fn get(&self, id: &str) -> Option<&Tensor> {
        self.clips.get(id).map(|(_, t)| t)
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    /// An empty store if `dir` holds none yet.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let index_path = dir.join(INDEX);
        if !index_path.exists() {
            return Ok(Self::default());
        }
        let index = std::fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
        let arrays = ArrayFile::load(dir.join(ARRAYS))?;
        let mut by_name: BTreeMap<String, Tensor> = arrays.arrays.into_iter().collect();
        let mut store = Self::default();
        for (i, line) in index.lines().enumerate().skip(1) {
            let fields: Vec<&str> = line.split('\t').collect();
            let [id, hash, ..] = fields[..] else {
                return Err(format_err!("{}:{}: malformed index line", index_path.display(), i + 1));
            };
            let t = by_name
                .remove(id)
                .ok_or_else(|| format_err!("{}: no array for indexed clip {id:?}", dir.display()))?;
            store.insert(id, hash, t);
        }
        Ok(store)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut arrays = ArrayFile::new("");
        let mut index = String::from("id\tsha256\tbands\tframes\n");
        for (id, (hash, t)) in &self.clips {
            writeln!(index, "{id}\t{hash}\t{}\t{}", t.dim(0), t.dim(1)).unwrap();
            arrays.push(id.clone(), t.clone());
        }
        arrays.save(dir.join(ARRAYS))?;
        let path = dir.join(INDEX);
        std::fs::write(&path, index).map_err(|e| Error::io(&path, e))
    }

    /// Pairs the meta entries with their features.
    pub fn labeled(&self, meta: &SceneMeta) -> Result<LabeledSet> {
        let mut ids = Vec::with_capacity(meta.len());
        let mut features = Vec::with_capacity(meta.len());
        let mut labels = Vec::with_capacity(meta.len());
        let mut absent = Vec::new();
        for e in &meta.entries {
            match self.get(&e.path) {
                Some(t) => {
                    ids.push(e.path.clone());
                    features.push(t.clone());
                    labels.push(e.label);
                }
                None => absent.push(e.path.as_str()),
            }
        }
        if !absent.is_empty() {
            let shown: Vec<&str> = absent.iter().take(5).copied().collect();
            return Err(format_err!("{} clips have no features, e.g. {}", absent.len(), shown.join(", ")));
        }
        Ok(LabeledSet::new(ids, features, labels, meta.class_names.clone())?)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeaturizeReport {
    pub computed: usize,
    pub skipped: usize,
    pub failed: Vec<(String, String)>,
}

/// Extracts log-mel features for every meta entry into `out`, skipping
/// clips whose source bytes hash to the value already in the store.
/// Per-file failures are collected rather than aborting the run.
pub fn featurize(audio_root: &Path, meta: &SceneMeta, out: &Path, rate: u32, bands: usize) -> Result<FeaturizeReport> {
    let mut store = FeatureStore::open(out)?;
    let extractor = LogMel::new(rate, bands)?;
    let mut report = FeaturizeReport::default();
    for e in &meta.entries {
        let path: PathBuf = audio_root.join(&e.path);
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(err) => {
                report.failed.push((e.path.clone(), err.to_string()));
                continue;
            }
        };
        let hash = sha256_hex(&bytes);
        if store.clips.get(&e.path).is_some_and(|(h, _)| *h == hash) {
            report.skipped += 1;
            continue;
        }
        match read_wav(&path).and_then(|clip| extractor.compute(&clip)) {
            Ok(t) => {
                store.insert(e.path.clone(), hash, t);
                report.computed += 1;
            }
            Err(err) => {
                log::warn!("{}: {err}", e.path);
                report.failed.push((e.path.clone(), err.to_string()));
            }
        }
    }
    if report.computed > 0 || !out.join(INDEX).exists() {
        store.save(out)?;
    }
    Ok(report)
}
