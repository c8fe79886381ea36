//! Model checkpoints: the resolved run config plus every parameter and
//! running statistic, stored in an [`ArrayFile`].

use std::collections::HashMap;
use std::path::Path;

use milscene_core::layers::Module;
use milscene_core::MilNet;

use crate::config::RunConfig;
use crate::container::ArrayFile;
use crate::error::{format_err, Result};

pub fn to_array_file(model: &MilNet, config: &RunConfig) -> ArrayFile {
    let mut file = ArrayFile::new(config.to_text());
    model.visit_state("", &mut |name, t| file.push(name, t.clone()));
    file
}

/// Rebuilds the network from the stored config and overwrites its state.
/// Every stored tensor must match a model tensor by name and shape.
pub fn from_array_file(file: ArrayFile) -> Result<(RunConfig, MilNet)> {
    let config = RunConfig::parse(&file.config)?;
    let mut model = MilNet::new(config.model_config()?)?;
    let mut stored: HashMap<String, _> = file.arrays.into_iter().collect();
    let mut problems = Vec::new();
    model.visit_state_mut("", &mut |name, t| match stored.remove(name) {
        Some(v) if v.shape() == t.shape() => *t = v,
        Some(v) => problems.push(format!("{name}: stored {:?}, model {:?}", v.shape(), t.shape())),
        None => problems.push(format!("{name}: missing")),
    });
    problems.extend(stored.keys().map(|k| format!("{k}: not in model")));
    if !problems.is_empty() {
        problems.sort();
        return Err(format_err!("checkpoint does not match its config: {}", problems.join("; ")));
    }
    Ok((config, model))
}

pub fn save(path: impl AsRef<Path>, model: &MilNet, config: &RunConfig) -> Result<()> {
    to_array_file(model, config).save(path)
}

pub fn load(path: impl AsRef<Path>) -> Result<(RunConfig, MilNet)> {
    let path = path.as_ref();
    from_array_file(ArrayFile::load(path)?).map_err(|e| format_err!("{}: {e}", path.display()))
}
