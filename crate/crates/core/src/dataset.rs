use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

/// Subjects with a feature tensor and a scalar response each.
///
/// Tensors are reference counted so that train/test splits and CV folds are
/// cheap views over the same data.
#[derive(Debug, Clone)]
pub struct Dataset {
    ids: Vec<String>,
    tensors: Vec<Arc<DenseTensor>>,
    responses: Vec<f64>,
    shape: Vec<usize>,
}

impl Dataset {
    pub fn new(ids: Vec<String>, tensors: Vec<DenseTensor>, responses: Vec<f64>) -> Result<Self> {
        Self::from_shared(ids, tensors.into_iter().map(Arc::new).collect(), responses)
    }

    pub fn from_shared(
        ids: Vec<String>,
        tensors: Vec<Arc<DenseTensor>>,
        responses: Vec<f64>,
    ) -> Result<Self> {
        if tensors.is_empty() {
            return Err(Error::EmptyData);
        }
        if ids.len() != tensors.len() || responses.len() != tensors.len() {
            return Err(Error::InvalidArgument(format!(
                "{} ids, {} tensors and {} responses",
                ids.len(),
                tensors.len(),
                responses.len()
            )));
        }
        let shape = tensors[0].shape().to_vec();
        if let Some(t) = tensors.iter().find(|t| t.shape() != shape.as_slice()) {
            return Err(Error::ShapeMismatch {
                expected: shape,
                found: t.shape().to_vec(),
            });
        }
        if responses.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("responses must be finite".into()));
        }
        Ok(Self {
            ids,
            tensors,
            responses,
            shape,
        })
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn tensor(&self, i: usize) -> &DenseTensor {
        &self.tensors[i]
    }

    pub fn tensors(&self) -> Vec<&DenseTensor> {
        self.tensors.iter().map(|t| t.as_ref()).collect()
    }

    /// Subjects at `indices`, in that order. Panics on an out-of-range index.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        Dataset::from_shared(
            indices.iter().map(|&i| self.ids[i].clone()).collect(),
            indices.iter().map(|&i| Arc::clone(&self.tensors[i])).collect(),
            indices.iter().map(|&i| self.responses[i]).collect(),
        )
    }

    /// Same subjects with different responses.
    pub fn with_responses(&self, responses: Vec<f64>) -> Result<Dataset> {
        Dataset::from_shared(self.ids.clone(), self.tensors.clone(), responses)
    }
}
