//! DCASE-style meta files: `relative/audio/path<TAB>scene_label[<TAB>...]`.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use crate::error::{format_err, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MetaEntry {
    /// Path relative to the audio root; doubles as the clip identifier.
    pub path: String,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneMeta {
    pub entries: Vec<MetaEntry>,
    /// Sorted unique labels; index = class.
    pub class_names: Vec<String>,
    /// Entries whose audio file was not found under the audio root.
    pub missing: Vec<String>,
}

impl SceneMeta {
    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Keeps entries whose path contains `pattern`, e.g. `-a.wav` for one
    /// recording device.
    pub fn filter_device(&mut self, pattern: &str) {
        self.entries.retain(|e| e.path.contains(pattern));
        self.missing.retain(|p| p.contains(pattern));
    }
}

fn is_header(fields: &[&str]) -> bool {
    let f0 = fields[0].to_ascii_lowercase();
    let f1 = fields.get(1).map(|s| s.to_ascii_lowercase()).unwrap_or_default();
    matches!(f0.as_str(), "filename" | "file" | "path") || matches!(f1.as_str(), "scene_label" | "label" | "scene")
}

/// Raw `(path, label)` rows with line numbers.
fn read_rows(path: &Path) -> Result<Vec<(String, String, usize)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if rows.is_empty() && i == 0 && is_header(&fields) {
            continue;
        }
        if fields.len() < 2 || fields[0].trim().is_empty() || fields[1].trim().is_empty() {
            return Err(format_err!("{}:{}: expected `path<TAB>label`, got {line:?}", path.display(), i + 1));
        }
        rows.push((fields[0].trim().to_string(), fields[1].trim().to_string(), i + 1));
    }
    if rows.is_empty() {
        return Err(format_err!("{}: meta file has no entries", path.display()));
    }
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut duplicates = Vec::new();
    for (p, _, line) in &rows {
        if let Some(first) = seen.insert(p.as_str(), *line) {
            duplicates.push(format!("{p} (lines {first} and {line})"));
        }
    }
    if !duplicates.is_empty() {
        return Err(format_err!("{}: duplicate entries: {}", path.display(), duplicates.join(", ")));
    }
    Ok(rows)
}

fn build(rows: Vec<(String, String, usize)>, class_names: Vec<String>, audio_root: Option<&Path>, meta: &Path) -> Result<SceneMeta> {
    let index: HashMap<&str, usize> = class_names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut entries = Vec::with_capacity(rows.len());
    let mut missing = Vec::new();
    for (p, label, line) in rows {
        let Some(&l) = index.get(label.as_str()) else {
            return Err(format_err!("{}:{line}: unknown label {label:?}", meta.display()));
        };
        if let Some(root) = audio_root {
            if !root.join(&p).is_file() {
                missing.push(p.clone());
            }
        }
        entries.push(MetaEntry { path: p, label: l });
    }
    if !missing.is_empty() {
        log::warn!("{}: {} of {} audio files not found", meta.display(), missing.len(), entries.len());
    }
    Ok(SceneMeta { entries, class_names, missing })
}

/// Loads a meta file, mapping labels to sorted unique class indices. When
/// `audio_root` is given, entries without a file under it are counted in
/// [`SceneMeta::missing`].
pub fn load_dcase_meta(meta: impl AsRef<Path>, audio_root: Option<&Path>) -> Result<SceneMeta> {
    let meta = meta.as_ref();
    let rows = read_rows(meta)?;
    let names: BTreeSet<&str> = rows.iter().map(|(_, l, _)| l.as_str()).collect();
    let class_names = names.into_iter().map(String::from).collect();
    build(rows, class_names, audio_root, meta)
}

/// Loads a second fold against the classes of the first; labels outside
/// `class_names` are errors.
pub fn load_dcase_meta_with_classes(
    meta: impl AsRef<Path>,
    audio_root: Option<&Path>,
    class_names: &[String],
) -> Result<SceneMeta> {
    let meta = meta.as_ref();
    build(read_rows(meta)?, class_names.to_vec(), audio_root, meta)
}

/// Writes a meta file with a header line.
pub fn write_meta(path: impl AsRef<Path>, rows: &[(String, String)]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::from("filename\tscene_label\n");
    for (p, l) in rows {
        text.push_str(p);
        text.push('\t');
        text.push_str(l);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn resolve_audio(root: &Path, entry: &MetaEntry) -> PathBuf {
    root.join(&entry.path)
}
