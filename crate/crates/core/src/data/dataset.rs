use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{invalid, shape_err, Error, Result};
use crate::tensor::Tensor;

/// In-memory `[bands, frames]` feature maps with scene labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub ids: Vec<String>,
    pub features: Vec<Tensor>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl LabeledSet {
    pub fn new(ids: Vec<String>, features: Vec<Tensor>, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::EmptyDataset(String::from("no clips")));
        }
        if ids.len() != features.len() || labels.len() != features.len() {
            return Err(invalid!(
                "{} ids, {} feature maps and {} labels do not line up",
                ids.len(),
                features.len(),
                labels.len()
            ));
        }
        let shape = features[0].shape().to_vec();
        if shape.len() != 2 {
            return Err(shape_err!("feature maps must be [bands, frames], got {:?}", shape));
        }
        if let Some((i, f)) = features.iter().enumerate().find(|(_, f)| f.shape() != shape.as_slice()) {
            return Err(shape_err!("clip {} has shape {:?}, expected {:?}", ids[i], f.shape(), shape));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(invalid!("label {} out of range for {} classes", l, class_names.len()));
        }
        Ok(Self { ids, features, labels, class_names })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    /// `(bands, frames)`.
    pub fn feature_shape(&self) -> (usize, usize) {
        let s = self.features[0].shape();
        (s[0], s[1])
    }

    /// Stacks the listed clips into a `[n, 1, bands, frames]` batch.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let (b, t) = self.feature_shape();
        let mut data = Vec::with_capacity(indices.len() * b * t);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.features[i].data());
            labels.push(self.labels[i]);
        }
        Ok((Tensor::new(alloc::vec![indices.len(), 1, b, t], data)?, labels))
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = alloc::vec![0; self.classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}
