use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{
    design_matrix, enet_fit, glasso_fit, lasso_fit, pca_lr_fit, BaselineOptions, GroupSpec, Grouping, LinearModel,
};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::regression::{fit, FitConfig, RegressionModel};
use crate::tensor::DenseTensor;

/// Methods compared by the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Proposed,
    Lasso,
    Enet,
    Glasso,
    PcaLr,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::PcaLr, Method::Lasso, Method::Enet, Method::Glasso, Method::Proposed];

    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Lasso => "lasso",
            Method::Enet => "enet",
            Method::Glasso => "glasso",
            Method::PcaLr => "pca_lr",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "proposed" => Ok(Method::Proposed),
            "lasso" => Ok(Method::Lasso),
            "enet" | "elastic_net" => Ok(Method::Enet),
            "glasso" | "group_lasso" => Ok(Method::Glasso),
            "pca_lr" | "pca" => Ok(Method::PcaLr),
            _ => Err(Error::InvalidArgument(format!(
                "unknown method `{s}` (expected proposed, lasso, enet, glasso or pca_lr)"
            ))),
        }
    }
}

/// One point of a method's hyperparameter grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Hyperparams {
    Proposed { max_rank: usize },
    Lasso { lambda: f64 },
    Enet { lambda: f64, alpha: f64 },
    Glasso { lambda_group: f64, lambda_l1: f64, grouping: Grouping },
    PcaLr { fraction: f64 },
}

impl Hyperparams {
    pub fn method(&self) -> Method {
        match self {
            Hyperparams::Proposed { .. } => Method::Proposed,
            Hyperparams::Lasso { .. } => Method::Lasso,
            Hyperparams::Enet { .. } => Method::Enet,
            Hyperparams::Glasso { .. } => Method::Glasso,
            Hyperparams::PcaLr { .. } => Method::PcaLr,
        }
    }

    /// Compact `key=value;...` form used in CSV reports.
    pub fn describe(&self) -> String {
        match self {
            Hyperparams::Proposed { max_rank } => format!("max_rank={max_rank}"),
            Hyperparams::Lasso { lambda } => format!("lambda={lambda}"),
            Hyperparams::Enet { lambda, alpha } => format!("lambda={lambda};alpha={alpha}"),
            Hyperparams::Glasso {
                lambda_group,
                lambda_l1,
                grouping,
            } => format!(
                "lambda_group={lambda_group};lambda_l1={lambda_l1};grouping={}",
                grouping_name(*grouping)
            ),
            Hyperparams::PcaLr { fraction } => format!("fraction={fraction}"),
        }
    }
}

fn grouping_name(g: Grouping) -> &'static str {
    match g {
        Grouping::ByModality => "by_modality",
        Grouping::ByRoi => "by_roi",
    }
}

/// `{0.1, 0.2, …, 1.0}`.
pub fn tenths() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

/// Per-method hyperparameter lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodGrids {
    /// Candidate numbers of unit-rank terms.
    pub proposed_ranks: Vec<usize>,
    pub lasso_lambdas: Vec<f64>,
    pub enet_lambdas: Vec<f64>,
    pub enet_alphas: Vec<f64>,
    /// Coarse grid shared by both Group Lasso penalties.
    pub glasso_lambdas: Vec<f64>,
    pub glasso_groupings: Vec<Grouping>,
    /// After the coarse search, retry `{1, 2, …, 10} × best` for each
    /// penalty.
    pub glasso_refine: bool,
    pub pca_fractions: Vec<f64>,
}

impl Default for MethodGrids {
    fn default() -> Self {
        Self {
            proposed_ranks: (1..=70).collect(),
            lasso_lambdas: tenths(),
            enet_lambdas: tenths(),
            enet_alphas: tenths(),
            glasso_lambdas: (-6..=1).map(|e| 10f64.powi(e)).collect(),
            glasso_groupings: vec![Grouping::ByModality, Grouping::ByRoi],
            glasso_refine: true,
            pca_fractions: (1..=20).map(|i| i as f64 / 20.0).collect(),
        }
    }
}

impl MethodGrids {
    pub fn validate(&self) -> Result<()> {
        if self.proposed_ranks.contains(&0) {
            return Err(Error::InvalidArgument("candidate ranks must be at least 1".into()));
        }
        let nonneg = |name: &str, v: &[f64]| -> Result<()> {
            if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::InvalidArgument(format!("{name} must be nonnegative")));
            }
            Ok(())
        };
        nonneg("lasso_lambdas", &self.lasso_lambdas)?;
        nonneg("enet_lambdas", &self.enet_lambdas)?;
        nonneg("glasso_lambdas", &self.glasso_lambdas)?;
        if self.enet_alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::InvalidArgument("enet_alphas must lie in [0, 1]".into()));
        }
        if self.pca_fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return Err(Error::InvalidArgument("pca_fractions must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// First-stage grid of `method` for tensors of `shape`. Groupings that
    /// the shape cannot support are left out.
    pub fn candidates(&self, method: Method, shape: &[usize]) -> Vec<Hyperparams> {
        match method {
            Method::Proposed => self
                .proposed_ranks
                .iter()
                .map(|&max_rank| Hyperparams::Proposed { max_rank })
                .collect(),
            Method::Lasso => self
                .lasso_lambdas
                .iter()
                .map(|&lambda| Hyperparams::Lasso { lambda })
                .collect(),
            Method::Enet => self
                .enet_alphas
                .iter()
                .flat_map(|&alpha| {
                    self.enet_lambdas
                        .iter()
                        .map(move |&lambda| Hyperparams::Enet { lambda, alpha })
                })
                .collect(),
            Method::Glasso => self
                .glasso_groupings
                .iter()
                .filter(|g| group_mode(shape, **g).is_some())
                .flat_map(|&grouping| {
                    self.glasso_lambdas.iter().flat_map(move |&lambda_group| {
                        self.glasso_lambdas.iter().map(move |&lambda_l1| Hyperparams::Glasso {
                            lambda_group,
                            lambda_l1,
                            grouping,
                        })
                    })
                })
                .collect(),
            Method::PcaLr => self
                .pca_fractions
                .iter()
                .map(|&fraction| Hyperparams::PcaLr { fraction })
                .collect(),
        }
    }
}

/// Mode holding the modalities: the last mode when it has length 3.
pub fn modality_mode(shape: &[usize]) -> Option<usize> {
    match shape {
        [_, .., 3] => Some(shape.len() - 1),
        _ => None,
    }
}

/// Tensor mode a grouping partitions.
pub fn group_mode(shape: &[usize], grouping: Grouping) -> Option<usize> {
    match grouping {
        Grouping::ByRoi => (!shape.is_empty()).then_some(0),
        Grouping::ByModality => modality_mode(shape),
    }
}

/// A fitted model of any method, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedModel {
    Proposed(RegressionModel),
    Linear(LinearModel),
}

impl FittedModel {
    pub fn method(&self) -> Method {
        match self {
            FittedModel::Proposed(_) => Method::Proposed,
            FittedModel::Linear(m) => match m.params {
                crate::baselines::BaselineParams::Lasso { .. } => Method::Lasso,
                crate::baselines::BaselineParams::ElasticNet { .. } => Method::Enet,
                crate::baselines::BaselineParams::GroupLasso { .. } => Method::Glasso,
                crate::baselines::BaselineParams::PcaLr { .. } => Method::PcaLr,
            },
        }
    }

    pub fn input_shape(&self) -> &[usize] {
        match self {
            FittedModel::Proposed(m) => &m.input_shape,
            FittedModel::Linear(m) => &m.input_shape,
        }
    }

    pub fn predict(&self, x: &DenseTensor) -> Result<f64> {
        match self {
            FittedModel::Proposed(m) => m.predict(x),
            FittedModel::Linear(m) => m.predict(x),
        }
    }

    pub fn predict_all(&self, ds: &Dataset) -> Result<Vec<f64>> {
        (0..ds.len()).map(|i| self.predict(ds.tensor(i))).collect()
    }

    pub fn sparsity(&self, zero_tol: f64) -> f64 {
        match self {
            FittedModel::Proposed(m) => m.sparsity(zero_tol),
            FittedModel::Linear(m) => m.sparsity(zero_tol),
        }
    }

    pub fn coefficient_tensor(&self) -> Result<DenseTensor> {
        match self {
            FittedModel::Proposed(m) => Ok(m.coefficient_tensor()),
            FittedModel::Linear(m) => m.coefficient_tensor(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: FittedModel = serde_json::from_str(s)?;
        match &m {
            FittedModel::Proposed(r) => r.validate()?,
            FittedModel::Linear(l) => {
                let p: usize = l.input_shape.iter().product();
                if p != l.weights.len() || l.input_shape.is_empty() {
                    return Err(Error::InvalidTensor(format!(
                        "{} weights for input shape {:?}",
                        l.weights.len(),
                        l.input_shape
                    )));
                }
            }
        }
        Ok(m)
    }
}

/// Fit `hyper` on `train`. `seed` drives the proposed model's randomness.
pub fn fit_method(
    train: &Dataset,
    hyper: &Hyperparams,
    fit_cfg: &FitConfig,
    baseline: &BaselineOptions,
    seed: u64,
) -> Result<FittedModel> {
    if let Hyperparams::Proposed { max_rank } = *hyper {
        let cfg = FitConfig {
            max_rank,
            seed,
            ..fit_cfg.clone()
        };
        return Ok(FittedModel::Proposed(fit(train, &cfg)?));
    }
    let shape = train.shape().to_vec();
    let x = design_matrix(&train.tensors())?;
    let y = train.responses();
    let mut model = match *hyper {
        Hyperparams::Lasso { lambda } => lasso_fit(&x, y, lambda, baseline)?,
        Hyperparams::Enet { lambda, alpha } => enet_fit(&x, y, lambda, alpha, baseline)?,
        Hyperparams::Glasso {
            lambda_group,
            lambda_l1,
            grouping,
        } => {
            let mode = group_mode(&shape, grouping).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "shape {shape:?} has no mode for {} groups",
                    grouping_name(grouping)
                ))
            })?;
            let groups = GroupSpec::by_mode(&shape, mode, grouping)?;
            glasso_fit(&x, y, &groups, lambda_group, lambda_l1, baseline)?
        }
        Hyperparams::PcaLr { fraction } => pca_lr_fit(&x, y, fraction)?,
        Hyperparams::Proposed { .. } => unreachable!("handled above"),
    };
    model.input_shape = shape;
    Ok(FittedModel::Linear(model))
}
