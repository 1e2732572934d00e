//! Sequential sparse unit-rank tensor regression.
//!
//! The coefficient tensor is built as a sum of rank-1 terms `W = Σ_r W_r`.
//! Term `r` solves
//!
//! ```text
//! min (1/N) Σ_i (⟨W_r, X_i⟩ − y_i^r)² + λ_r ‖W_r‖₁   s.t. CP-rank(W_r) ≤ 1
//! ```
//!
//! against the current residual `y^r = y^{r−1} − ⟨W_{r−1}, X⟩`. `λ_r` is
//! chosen by internal K-fold validation along a warm-started path over a
//! geometric grid that starts at the smallest penalty zeroing the term.
//! Fitting stops when a term comes back zero or stops improving the
//! training error, so a model fitted with `max_rank = R` is always a prefix
//! of one fitted with a larger `max_rank`.

mod solver;
pub(crate) use solver::soft_threshold;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::Modality;
use crate::seed::{derive_seed, rng_for};
use crate::tensor::{inner_product, DenseTensor, UnitRankTensor};

use solver::{
    centered, mean, objective, one_hot_start, penalty_scale, solve_fixed, warm_start, zero_objective, ModeProblem,
};

/// Bottom of the λ grid relative to `λ_max`.
pub const LAMBDA_MIN_RATIO: f64 = 1e-3;

/// Fraction of subjects held out when choosing `λ_r`.
const VALIDATION_FRACTION: f64 = 0.2;

/// Default zero tolerance for sparsity counting.
pub const DEFAULT_ZERO_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Maximum number of unit-rank terms.
    pub max_rank: usize,
    /// Cap on alternating passes over the modes per unit-rank fit.
    pub inner_max_iters: usize,
    /// Relative objective change that ends the alternating passes; also the
    /// relative training-RMSE gain below which no further terms are added.
    pub convergence_tol: f64,
    pub lambda_grid_size: usize,
    pub seed: u64,
    /// Profile out an unpenalised intercept by centring responses and
    /// contracted features.
    pub fit_intercept: bool,
    pub selection: LambdaSelection,
    /// Number of internal folds used to score the λ grid; 1 means a single
    /// hold-out split.
    pub internal_folds: usize,
}

/// How the hold-out scores pick `λ_r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaSelection {
    /// Smallest hold-out error.
    MinError,
    /// Largest `λ` (the zero term counting as largest) whose hold-out error
    /// is within one standard error of the smallest.
    OneStandardError,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_rank: 70,
            inner_max_iters: 500,
            convergence_tol: 1e-9,
            lambda_grid_size: 20,
            seed: 0,
            fit_intercept: true,
            selection: LambdaSelection::OneStandardError,
            internal_folds: 5,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_rank == 0 {
            return Err(Error::InvalidArgument("max_rank must be at least 1".into()));
        }
        if self.inner_max_iters == 0 {
            return Err(Error::InvalidArgument("inner_max_iters must be at least 1".into()));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::InvalidArgument("convergence_tol must be positive".into()));
        }
        if self.lambda_grid_size < 2 {
            return Err(Error::InvalidArgument("lambda_grid_size must be at least 2".into()));
        }
        Ok(())
    }

    /// Geometric grid from `lambda_max` down to `lambda_max * LAMBDA_MIN_RATIO`.
    pub fn lambda_grid(&self, lambda_max: f64) -> Vec<f64> {
        let last = (self.lambda_grid_size - 1) as f64;
        (0..self.lambda_grid_size)
            .map(|g| lambda_max * LAMBDA_MIN_RATIO.powf(g as f64 / last))
            .collect()
    }
}

/// Diagnostics of one unit-rank fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub lambda_max: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Hold-out RMSE at the chosen λ, when a hold-out split was used.
    pub validation_rmse: Option<f64>,
    pub objective: f64,
    pub zero_objective: f64,
}

#[derive(Debug, Clone)]
pub struct UnitRankFit {
    pub component: UnitRankTensor,
    pub lambda: f64,
    pub diagnostics: StepDiagnostics,
}

impl UnitRankFit {
    pub fn is_zero(&self) -> bool {
        self.component.is_zero()
    }
}

fn validate_inputs(xs: &[&DenseTensor], y: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::EmptyData);
    }
    if xs.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "{} tensors but {} responses",
            xs.len(),
            y.len()
        )));
    }
    let shape = xs[0].shape();
    if let Some(x) = xs.iter().find(|x| x.shape() != shape) {
        return Err(Error::ShapeMismatch {
            expected: shape.to_vec(),
            found: x.shape().to_vec(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("responses must be finite".into()));
    }
    Ok(())
}

fn zero_fit(shape: &[usize], lambda_max: f64, y: &[f64], center: bool) -> UnitRankFit {
    let z = zero_objective(y, center);
    UnitRankFit {
        component: UnitRankTensor::zeros(shape).expect("validated shape"),
        lambda: lambda_max,
        diagnostics: StepDiagnostics {
            lambda_max,
            iterations: 0,
            converged: true,
            validation_rmse: None,
            objective: z,
            zero_objective: z,
        },
    }
}

/// `λ_max` for the first mode update from `init`.
fn lambda_max_at(xs: &[&DenseTensor], y: &[f64], init: &UnitRankTensor, center: bool) -> f64 {
    let problem = ModeProblem::build(xs, y, init, 0, center);
    let scale = penalty_scale(init, 0);
    if scale == 0.0 {
        return 0.0;
    }
    problem.zero_threshold() / scale
}

fn finish(
    xs: &[&DenseTensor],
    y: &[f64],
    lambda: f64,
    lambda_max: f64,
    init: &UnitRankTensor,
    cfg: &FitConfig,
    validation_rmse: Option<f64>,
) -> UnitRankFit {
    let center = cfg.fit_intercept;
    let fitted = solve_fixed(
        xs,
        y,
        lambda,
        init,
        cfg.inner_max_iters,
        cfg.convergence_tol,
        center,
    );
    let zero_obj = zero_objective(y, center);
    // The warm start is not guaranteed to beat zero, so neither is a descent from it.
    let obj = objective(xs, y, &fitted.w, lambda, center);
    if fitted.w.is_zero() || obj > zero_obj {
        let mut z = zero_fit(xs[0].shape(), lambda_max, y, center);
        z.lambda = lambda;
        z.diagnostics.iterations = fitted.iterations;
        return z;
    }
    let mut w = fitted.w;
    w.canonicalize();
    UnitRankFit {
        component: w,
        lambda,
        diagnostics: StepDiagnostics {
            lambda_max,
            iterations: fitted.iterations,
            converged: fitted.converged,
            validation_rmse,
            objective: obj,
            zero_objective: zero_obj,
        },
    }
}

/// Fit one sparse unit-rank term at a fixed `λ`.
pub fn fit_unit_rank_at(
    xs: &[&DenseTensor],
    residuals: &[f64],
    lambda: f64,
    cfg: &FitConfig,
) -> Result<UnitRankFit> {
    validate_inputs(xs, residuals)?;
    cfg.validate()?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be nonnegative, got {lambda}")));
    }
    let center = cfg.fit_intercept;
    let mut rng = rng_for(cfg.seed, &[0]);
    let Some(init) = warm_start(xs, residuals, center, &mut rng) else {
        return Ok(zero_fit(xs[0].shape(), 0.0, residuals, center));
    };
    let lambda_max = lambda_max_at(xs, residuals, &init, center);
    Ok(finish(xs, residuals, lambda, lambda_max, &init, cfg, None))
}

/// Warm start for each λ of a descending `grid` when following the path
/// from `init`: the last nonzero solution above it, or `init` if none.
fn path_starts(
    xs: &[&DenseTensor],
    y: &[f64],
    grid: &[f64],
    init: &UnitRankTensor,
    cfg: &FitConfig,
) -> Vec<(UnitRankTensor, UnitRankTensor)> {
    let center = cfg.fit_intercept;
    let zero_obj = zero_objective(y, center);
    let mut start = init.clone();
    let mut out = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let fitted = solve_fixed(
            xs,
            y,
            lambda,
            &start,
            cfg.inner_max_iters,
            cfg.convergence_tol,
            center,
        );
        let w = if fitted.w.is_zero() || objective(xs, y, &fitted.w, lambda, center) > zero_obj {
            UnitRankTensor::zeros(&fitted.w.shape()).expect("validated shape")
        } else {
            fitted.w
        };
        let used = start.clone();
        if !w.is_zero() {
            start = w.clone();
        }
        out.push((used, w));
    }
    out
}

/// Train/validation index pairs used to score the λ grid: a single split
/// holding out `VALIDATION_FRACTION` of the subjects when
/// `internal_folds == 1`, otherwise `internal_folds`-fold cross-validation.
fn internal_splits(n: usize, cfg: &FitConfig) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(cfg.seed, &[1]));
    let k = cfg.internal_folds.min(n);
    let assign: Vec<usize> = if k <= 1 {
        let n_val = ((n as f64 * VALIDATION_FRACTION).round() as usize).clamp(1, n - 1);
        (0..n).map(|p| usize::from(p >= n_val)).collect()
    } else {
        (0..n).map(|p| p % k).collect()
    };
    let folds = k.max(1);
    (0..folds)
        .map(|f| {
            let mut train = Vec::new();
            let mut val = Vec::new();
            for (p, &i) in order.iter().enumerate() {
                if assign[p] == f {
                    val.push(i);
                } else {
                    train.push(i);
                }
            }
            train.sort_unstable();
            val.sort_unstable();
            (train, val)
        })
        .collect()
}

/// Squared hold-out errors of `w`, with the intercept (if any) estimated on
/// the training subjects.
fn holdout_errors(
    xs: &[&DenseTensor],
    y: &[f64],
    w: &UnitRankTensor,
    train: &[usize],
    val: &[usize],
    center: bool,
) -> Vec<f64> {
    let preds: Vec<f64> = xs
        .iter()
        .map(|x| if w.is_zero() { Ok(0.0) } else { inner_product(x, w) })
        .collect::<Result<_>>()
        .expect("validated shapes");
    let intercept = if center {
        train.iter().map(|&i| y[i] - preds[i]).sum::<f64>() / train.len() as f64
    } else {
        0.0
    };
    val.iter()
        .map(|&i| (y[i] - preds[i] - intercept).powi(2))
        .collect()
}

/// Fit one sparse unit-rank term, choosing `λ` automatically.
///
/// The path over the λ grid is traced on each of `cfg.internal_folds` seeded
/// folds and scored on the held-out subjects; the zero term is one more
/// candidate. The λ picked by `cfg.selection` is refitted on all subjects by
/// following the path down to it. With fewer than five subjects no split is
/// made and the smallest grid value is used.
pub fn fit_unit_rank(xs: &[&DenseTensor], residuals: &[f64], cfg: &FitConfig) -> Result<UnitRankFit> {
    validate_inputs(xs, residuals)?;
    cfg.validate()?;
    let center = cfg.fit_intercept;
    let shape = xs[0].shape().to_vec();
    let Some(init) = one_hot_start(xs, residuals, center) else {
        return Ok(zero_fit(&shape, 0.0, residuals, center));
    };
    let lambda_max = lambda_max_at(xs, residuals, &init, center);
    if !(lambda_max > 0.0) {
        return Ok(zero_fit(&shape, 0.0, residuals, center));
    }
    let grid = cfg.lambda_grid(lambda_max);
    let n = xs.len();
    if n < 5 {
        let lambda = *grid.last().expect("grid has at least two points");
        let start = path_starts(xs, residuals, &grid, &init, cfg)
            .pop()
            .expect("nonempty path")
            .0;
        return Ok(finish(xs, residuals, lambda, lambda_max, &start, cfg, None));
    }

    let zero = UnitRankTensor::zeros(&shape).expect("validated shape");
    // errors[c] holds the squared validation errors of candidate c over all
    // validation subjects: candidate 0 is the zero term, candidate g + 1 the
    // path solution at grid[g].
    let mut errors: Vec<Vec<f64>> = vec![Vec::new(); grid.len() + 1];
    for (train, val) in internal_splits(n, cfg) {
        let sub_x: Vec<&DenseTensor> = train.iter().map(|&i| xs[i]).collect();
        let sub_y: Vec<f64> = train.iter().map(|&i| residuals[i]).collect();
        let path = match one_hot_start(&sub_x, &sub_y, center) {
            Some(sub_init) => path_starts(&sub_x, &sub_y, &grid, &sub_init, cfg),
            None => vec![(zero.clone(), zero.clone()); grid.len()],
        };
        for (c, w) in std::iter::once(&zero).chain(path.iter().map(|(_, w)| w)).enumerate() {
            errors[c].extend(holdout_errors(xs, residuals, w, &train, &val, center));
        }
    }
    let mses: Vec<f64> = errors.iter().map(|e| mean(e)).collect();
    // Ties go to the later candidate, i.e. the smaller λ.
    let best = (0..mses.len())
        .rev()
        .min_by(|&a, &b| mses[a].total_cmp(&mses[b]))
        .expect("nonempty candidates");
    let chosen = match cfg.selection {
        LambdaSelection::MinError => best,
        LambdaSelection::OneStandardError => {
            let e = &errors[best];
            let m = mses[best];
            let var = e.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (e.len().max(2) - 1) as f64;
            let limit = m + (var / e.len() as f64).sqrt();
            (0..mses.len()).find(|&c| mses[c] <= limit).expect("best is within its own limit")
        }
    };
    if chosen == 0 {
        return Ok(zero_fit(&shape, lambda_max, residuals, center));
    }
    let g = chosen - 1;
    let start = path_starts(xs, residuals, &grid[..=g], &init, cfg)
        .pop()
        .expect("nonempty path")
        .0;
    Ok(finish(xs, residuals, grid[g], lambda_max, &start, cfg, Some(mses[chosen].sqrt())))
}

/// One unit-rank term of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    #[serde(flatten)]
    pub tensor: UnitRankTensor,
    pub lambda: f64,
    pub diagnostics: StepDiagnostics,
}

/// A fitted sum of sparse unit-rank terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    pub input_shape: Vec<usize>,
    pub components: Vec<Component>,
    /// `intercept_path[r]` is the intercept of the model truncated to `r` terms.
    pub intercept_path: Vec<f64>,
    /// `train_rmse_path[r]` is the training RMSE with `r` terms; entry 0 is
    /// the empty model.
    pub train_rmse_path: Vec<f64>,
}

fn training_rmse(residual: &[f64], center: bool) -> f64 {
    let r = centered(residual, center);
    (r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt()
}

/// Fit the sequential model; also returns the final internal residuals
/// `y_i − Σ_r ⟨W_r, X_i⟩` (before any intercept).
pub fn fit_traced(ds: &Dataset, cfg: &FitConfig) -> Result<(RegressionModel, Vec<f64>)> {
    cfg.validate()?;
    let xs = ds.tensors();
    validate_inputs(&xs, ds.responses())?;
    let center = cfg.fit_intercept;
    let mut residual = ds.responses().to_vec();
    let mut rmse = training_rmse(&residual, center);
    let mut model = RegressionModel {
        input_shape: ds.shape().to_vec(),
        components: Vec::new(),
        intercept_path: vec![if center { mean(&residual) } else { 0.0 }],
        train_rmse_path: vec![rmse],
    };
    for r in 1..=cfg.max_rank {
        let step_cfg = FitConfig {
            seed: derive_seed(cfg.seed, &[r as u64]),
            ..cfg.clone()
        };
        let step = fit_unit_rank(&xs, &residual, &step_cfg)?;
        if step.is_zero() {
            break;
        }
        let next: Vec<f64> = xs
            .iter()
            .zip(&residual)
            .map(|(x, res)| inner_product(x, &step.component).map(|p| res - p))
            .collect::<Result<_>>()?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite residual at rank step {r}")));
        }
        let next_rmse = training_rmse(&next, center);
        if next_rmse > rmse {
            break;
        }
        residual = next;
        model.components.push(Component {
            tensor: step.component,
            lambda: step.lambda,
            diagnostics: step.diagnostics,
        });
        model
            .intercept_path
            .push(if center { mean(&residual) } else { 0.0 });
        model.train_rmse_path.push(next_rmse);
        let gain = rmse - next_rmse;
        rmse = next_rmse;
        if gain <= cfg.convergence_tol * model.train_rmse_path[r - 1] {
            break;
        }
    }
    Ok((model, residual))
}

pub fn fit(ds: &Dataset, cfg: &FitConfig) -> Result<RegressionModel> {
    fit_traced(ds, cfg).map(|(m, _)| m)
}

impl RegressionModel {
    pub fn rank(&self) -> usize {
        self.components.len()
    }

    pub fn intercept(&self) -> f64 {
        *self.intercept_path.last().unwrap_or(&0.0)
    }

    /// `b + Σ_r ⟨W_r, x⟩`.
    pub fn predict(&self, x: &DenseTensor) -> Result<f64> {
        if x.shape() != self.input_shape.as_slice() {
            return Err(Error::ShapeMismatch {
                expected: self.input_shape.clone(),
                found: x.shape().to_vec(),
            });
        }
        self.components
            .iter()
            .try_fold(self.intercept(), |acc, c| Ok(acc + inner_product(x, &c.tensor)?))
    }

    /// `Σ_r W_r`, materialized.
    pub fn coefficient_tensor(&self) -> DenseTensor {
        let mut out = DenseTensor::zeros(&self.input_shape).expect("validated shape");
        for c in &self.components {
            out.add_assign(&c.tensor.materialize())
                .expect("component shapes match the model");
        }
        out
    }

    /// Percentage of coefficient entries with magnitude at most `zero_tol`.
    pub fn sparsity(&self, zero_tol: f64) -> f64 {
        sparsity_percent(self.coefficient_tensor().values(), zero_tol)
    }

    /// Model with only the first `r` terms (as if fitted with `max_rank = r`).
    pub fn truncated(&self, r: usize) -> RegressionModel {
        let r = r.min(self.rank());
        RegressionModel {
            input_shape: self.input_shape.clone(),
            components: self.components[..r].to_vec(),
            intercept_path: self.intercept_path[..=r].to_vec(),
            train_rmse_path: self.train_rmse_path[..=r].to_vec(),
        }
    }

    /// Mean `|w_r(mode)[m]|` over terms for each modality, sorted descending
    /// (stable, so ties keep the VBM, FDG, AV45 order).
    pub fn modality_contribution(&self, modality_mode: usize) -> Result<Vec<(Modality, f64)>> {
        match self.input_shape.get(modality_mode) {
            Some(3) => {}
            Some(&d) => {
                return Err(Error::InvalidArgument(format!(
                    "mode {modality_mode} has length {d}, expected 3 modalities"
                )))
            }
            None => {
                return Err(Error::InvalidArgument(format!(
                    "mode {modality_mode} out of range for order {}",
                    self.input_shape.len()
                )))
            }
        }
        let r = self.rank().max(1) as f64;
        let mut scores: Vec<(Modality, f64)> = Modality::ALL
            .iter()
            .enumerate()
            .map(|(m, &modality)| {
                let s: f64 = self
                    .components
                    .iter()
                    .map(|c| c.tensor.factor(modality_mode)[m].abs())
                    .sum();
                (modality, s / r)
            })
            .collect();
        scores.sort_by(|a, b| b.1.total_cmp(&a.1));
        Ok(scores)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::InvalidTensor(format!(
                "invalid model shape {:?}",
                self.input_shape
            )));
        }
        for c in &self.components {
            if c.tensor.shape() != self.input_shape {
                return Err(Error::ShapeMismatch {
                    expected: self.input_shape.clone(),
                    found: c.tensor.shape(),
                });
            }
        }
        let n = self.components.len() + 1;
        if self.intercept_path.len() != n || self.train_rmse_path.len() != n {
            return Err(Error::InvalidArgument(
                "path lengths must be one more than the number of components".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: RegressionModel = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }
}

pub(crate) fn sparsity_percent(values: &[f64], zero_tol: f64) -> f64 {
    let zeros = values.iter().filter(|v| v.abs() <= zero_tol).count();
    100.0 * zeros as f64 / values.len() as f64
}

/// Largest Lasso subgradient violation of each mode subproblem at `w`.
pub fn kkt_violations(
    xs: &[&DenseTensor],
    residuals: &[f64],
    w: &UnitRankTensor,
    lambda: f64,
    fit_intercept: bool,
) -> Result<Vec<f64>> {
    validate_inputs(xs, residuals)?;
    if w.shape() != xs[0].shape() {
        return Err(Error::ShapeMismatch {
            expected: xs[0].shape().to_vec(),
            found: w.shape(),
        });
    }
    Ok((0..w.order())
        .map(|j| {
            let p = ModeProblem::build(xs, residuals, w, j, fit_intercept);
            p.kkt_violation(w.factor(j), lambda * penalty_scale(w, j))
        })
        .collect())
}

#[cfg(test)]
mod tests;
