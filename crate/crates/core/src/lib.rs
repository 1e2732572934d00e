//! Joint feature selection and sparse low-rank tensor regression for
//! multi-modality ROI data.
//!
//! * [`tensor`]: dense and rank-1 tensor algebra.
//! * [`graph`]: the 116×3, 116×116 and 116×116×3 subject representations.
//! * [`regression`]: the sequential sparse unit-rank regression model.
//! * [`baselines`]: Lasso, Elastic Net, Group Lasso and PCA + least squares.
//! * [`evaluation`]: splits, cross-validation, benchmarks, sweeps, rankings.
//! * [`data`]: cohort CSV ingestion, score normalization, synthetic cohorts.

pub mod baselines;
pub mod data;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod regression;
pub mod seed;
pub mod tensor;

pub use dataset::Dataset;
pub use error::{Error, ErrorClass, Result};
pub use graph::{GraphConfig, Modality, Representation, SubjectFeatures, N_ROIS};
pub use regression::{fit, FitConfig, RegressionModel};
pub use tensor::{DenseTensor, UnitRankTensor};
