//! Vector-space comparison methods: Lasso, Elastic Net, Group Lasso and PCA
//! followed by least squares.
//!
//! All methods fit an unpenalized intercept. Penalized fits standardize the
//! columns by default; reported weights are always on the original scale.

mod enet;
mod group;
mod pca;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::sparsity_percent;
use crate::tensor::DenseTensor;

pub use enet::{enet_fit, enet_kkt_violation, lasso_fit};
pub use group::{glasso_fit, glasso_kkt_violation, GroupSpec, Grouping};
pub use pca::pca_lr_fit;

/// Row-major flattening.
pub fn vectorize(x: &DenseTensor) -> Vec<f64> {
    x.values().to_vec()
}

/// Inverse of [`vectorize`].
pub fn devectorize(v: &[f64], shape: &[usize]) -> Result<DenseTensor> {
    DenseTensor::new(shape.to_vec(), v.to_vec())
}

/// `N × p` design matrix with one vectorized tensor per row.
pub fn design_matrix(xs: &[&DenseTensor]) -> Result<DMatrix<f64>> {
    let first = xs.first().ok_or(Error::EmptyData)?;
    let p = first.len();
    if let Some(x) = xs.iter().find(|x| x.shape() != first.shape()) {
        return Err(Error::ShapeMismatch {
            expected: first.shape().to_vec(),
            found: x.shape().to_vec(),
        });
    }
    Ok(DMatrix::from_fn(xs.len(), p, |i, j| xs[i].values()[j]))
}

/// Solver settings shared by the baselines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineOptions {
    /// Scale columns to unit (population) variance before penalized fits.
    pub standardize: bool,
    /// Coordinate descent stops when no coefficient moves the fitted values
    /// by more than this (root mean square).
    pub tol: f64,
    /// Cap on passes over the coordinates or groups.
    pub max_iter: usize,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        Self {
            standardize: true,
            tol: 1e-10,
            max_iter: 100_000,
        }
    }
}

/// Method and hyperparameters of a [`LinearModel`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum BaselineParams {
    Lasso { lambda: f64 },
    ElasticNet { lambda: f64, alpha: f64 },
    GroupLasso { lambda_group: f64, lambda_l1: f64, grouping: Grouping },
    PcaLr { fraction: f64, components: usize },
}

impl BaselineParams {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineParams::Lasso { .. } => "lasso",
            BaselineParams::ElasticNet { .. } => "enet",
            BaselineParams::GroupLasso { .. } => "glasso",
            BaselineParams::PcaLr { .. } => "pca_lr",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearDiagnostics {
    pub iterations: usize,
    pub converged: bool,
}

/// `y ≈ b + wᵀ vec(X)` over the vectorized tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub params: BaselineParams,
    /// Shape of the source tensors; `weights.len()` is its product.
    pub input_shape: Vec<usize>,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub diagnostics: LinearDiagnostics,
}

impl LinearModel {
    pub fn predict_vector(&self, v: &[f64]) -> Result<f64> {
        if v.len() != self.weights.len() {
            return Err(Error::ShapeMismatch {
                expected: vec![self.weights.len()],
                found: vec![v.len()],
            });
        }
        Ok(self.intercept + v.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>())
    }

    pub fn predict(&self, x: &DenseTensor) -> Result<f64> {
        if x.shape() != self.input_shape.as_slice() {
            return Err(Error::ShapeMismatch {
                expected: self.input_shape.clone(),
                found: x.shape().to_vec(),
            });
        }
        self.predict_vector(x.values())
    }

    /// Percentage of zero weights. PCA + least squares selects no features,
    /// so it reports 0 whatever its folded-back weights look like.
    pub fn sparsity(&self, zero_tol: f64) -> f64 {
        match self.params {
            BaselineParams::PcaLr { .. } => 0.0,
            _ => sparsity_percent(&self.weights, zero_tol),
        }
    }

    pub fn coefficient_tensor(&self) -> Result<DenseTensor> {
        devectorize(&self.weights, &self.input_shape)
    }
}

/// Centred (and optionally scaled) copy of the design with the statistics
/// needed to map weights back.
pub(crate) struct Prepared {
    pub z: DMatrix<f64>,
    pub yc: Vec<f64>,
    pub x_mean: Vec<f64>,
    /// Column divisor; 0 for constant columns, whose weight is forced to 0.
    pub scale: Vec<f64>,
    pub y_mean: f64,
}

impl Prepared {
    pub fn new(x: &DMatrix<f64>, y: &[f64], standardize: bool) -> Result<Self> {
        let (n, p) = x.shape();
        if n == 0 || p == 0 {
            return Err(Error::EmptyData);
        }
        if y.len() != n {
            return Err(Error::InvalidArgument(format!(
                "design has {n} rows but {} responses",
                y.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("inputs must be finite".into()));
        }
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let yc = y.iter().map(|v| v - y_mean).collect();
        let mut z = x.clone();
        let mut x_mean = vec![0.0; p];
        let mut scale = vec![1.0; p];
        for (j, mut col) in z.column_iter_mut().enumerate() {
            let m = col.iter().sum::<f64>() / n as f64;
            col.iter_mut().for_each(|v| *v -= m);
            let ss = col.iter().map(|v| v * v).sum::<f64>();
            x_mean[j] = m;
            if ss <= f64::EPSILON * f64::EPSILON * n as f64 * m.abs().max(1.0).powi(2) {
                col.fill(0.0);
                scale[j] = 0.0;
            } else if standardize {
                let sd = (ss / n as f64).sqrt();
                col.iter_mut().for_each(|v| *v /= sd);
                scale[j] = sd;
            }
        }
        Ok(Self {
            z,
            yc,
            x_mean,
            scale,
            y_mean,
        })
    }

    /// Original-scale weights and intercept from weights on `z`.
    pub fn unscale(&self, w: &[f64]) -> (Vec<f64>, f64) {
        let weights: Vec<f64> = w
            .iter()
            .zip(&self.scale)
            .map(|(v, s)| if *s == 0.0 { 0.0 } else { v / s })
            .collect();
        let intercept = self.y_mean
            - weights
                .iter()
                .zip(&self.x_mean)
                .map(|(a, b)| a * b)
                .sum::<f64>();
        (weights, intercept)
    }
}

pub(crate) fn check_lambda(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "{name} must be a nonnegative number, got {v}"
        )));
    }
    Ok(())
}
