use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::Representation;
use crate::tensor::DenseTensor;

/// One subject of a [`TensorDump`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpSubject {
    pub id: String,
    /// Row-major tensor entries.
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<f64>,
}

/// Plain JSON export of per-subject tensors, usable for any shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorDump {
    /// Layout the tensors were built with; absent for generic tensors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub representation: Option<Representation>,
    pub shape: Vec<usize>,
    pub subjects: Vec<DumpSubject>,
}

impl TensorDump {
    pub fn from_dataset(ds: &Dataset, representation: Option<Representation>, with_responses: bool) -> Self {
        let subjects = (0..ds.len())
            .map(|i| DumpSubject {
                id: ds.ids()[i].clone(),
                values: ds.tensor(i).values().to_vec(),
                response: with_responses.then(|| ds.responses()[i]),
            })
            .collect();
        Self {
            representation,
            shape: ds.shape().to_vec(),
            subjects,
        }
    }

    /// Tensors in subject order, validated against `shape`.
    pub fn tensors(&self) -> Result<Vec<DenseTensor>> {
        self.subjects
            .iter()
            .map(|s| DenseTensor::new(self.shape.clone(), s.values.clone()))
            .collect()
    }

    /// Dataset with the embedded responses, or with `responses` when given.
    pub fn to_dataset(&self, responses: Option<Vec<f64>>) -> Result<Dataset> {
        let responses = match responses {
            Some(r) => r,
            None => self
                .subjects
                .iter()
                .map(|s| {
                    s.response.ok_or_else(|| {
                        Error::InvalidArgument(format!("subject `{}` has no response", s.id))
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        };
        let ids = self.subjects.iter().map(|s| s.id.clone()).collect();
        Dataset::new(ids, self.tensors()?, responses)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphConfig;

    #[test]
    fn round_trip() {
        let xs = vec![
            DenseTensor::new(vec![2, 2], vec![1.0, 0.1, -3.5, 1e-17]).unwrap(),
            DenseTensor::new(vec![2, 2], vec![0.0, 2.0, 4.0, 1.0 / 3.0]).unwrap(),
        ];
        let ds = Dataset::new(vec!["a".into(), "b".into()], xs, vec![0.25, 0.75]).unwrap();
        let rep = Representation::Connectivity(GraphConfig::default());
        let dump = TensorDump::from_dataset(&ds, Some(rep), true);
        let back = TensorDump::from_json(&dump.to_json().unwrap()).unwrap();
        assert_eq!(back, dump);
        let ds2 = back.to_dataset(None).unwrap();
        assert_eq!(ds2.tensor(1), ds.tensor(1));
        assert_eq!(ds2.responses(), ds.responses());

        let bare = TensorDump::from_dataset(&ds, None, false);
        assert!(!bare.to_json().unwrap().contains("response"));
        assert!(bare.to_dataset(None).is_err());
        assert!(bare.to_dataset(Some(vec![1.0, 2.0])).is_ok());
    }

    #[test]
    fn rejects_wrong_lengths() {
        let dump = TensorDump {
            representation: None,
            shape: vec![2, 2],
            subjects: vec![DumpSubject {
                id: "x".into(),
                values: vec![1.0; 3],
                response: Some(0.0),
            }],
        };
        assert!(dump.to_dataset(None).is_err());
    }
}
