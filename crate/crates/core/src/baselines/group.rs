use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_lambda, BaselineOptions, BaselineParams, LinearDiagnostics, LinearModel, Prepared};
use crate::error::{Error, Result};
use crate::regression::soft_threshold;

/// How features are grouped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// One group per modality.
    ByModality,
    /// One group per ROI (the first tensor mode).
    ByRoi,
}

/// Group index of every vectorized feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub assignment: Vec<usize>,
    pub mode: Grouping,
}

impl GroupSpec {
    /// Group features by their index along tensor mode `mode` of `shape`.
    pub fn by_mode(shape: &[usize], mode: usize, grouping: Grouping) -> Result<Self> {
        if mode >= shape.len() {
            return Err(Error::InvalidArgument(format!(
                "mode {mode} out of range for shape {shape:?}"
            )));
        }
        let len: usize = shape.iter().product();
        let stride: usize = shape[mode + 1..].iter().product();
        let dim = shape[mode];
        let assignment = (0..len).map(|i| (i / stride) % dim).collect();
        let spec = Self {
            assignment,
            mode: grouping,
        };
        spec.validate(len)?;
        Ok(spec)
    }

    /// ROI groups over mode 0.
    pub fn by_roi(shape: &[usize]) -> Result<Self> {
        Self::by_mode(shape, 0, Grouping::ByRoi)
    }

    /// Modality groups over `modality_mode`.
    pub fn by_modality(shape: &[usize], modality_mode: usize) -> Result<Self> {
        Self::by_mode(shape, modality_mode, Grouping::ByModality)
    }

    pub fn n_groups(&self) -> usize {
        self.assignment.iter().max().map_or(0, |m| m + 1)
    }

    /// Feature indices of each group.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_groups()];
        for (k, &g) in self.assignment.iter().enumerate() {
            out[g].push(k);
        }
        out
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.assignment.len() != n_features {
            return Err(Error::InvalidArgument(format!(
                "group assignment covers {} features, design has {n_features}",
                self.assignment.len()
            )));
        }
        if let Some(g) = self.members().iter().position(Vec::is_empty) {
            return Err(Error::InvalidArgument(format!("group {g} is empty")));
        }
        Ok(())
    }
}

/// `prox` of `t(λ₁‖·‖₁ + λ_g√|g|‖·‖₂)`: elementwise then group soft-threshold.
fn sparse_group_prox(v: &mut [f64], l1: f64, lg: f64) {
    v.iter_mut().for_each(|x| *x = soft_threshold(*x, l1));
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= lg {
        v.fill(0.0);
    } else {
        let f = 1.0 - lg / norm;
        v.iter_mut().for_each(|x| *x *= f);
    }
}

/// Largest eigenvalue of `(2/N) Z_gᵀ Z_g`.
fn block_lipschitz(zg: &DMatrix<f64>) -> f64 {
    let n = zg.nrows() as f64;
    // ZᵀZ and ZZᵀ share their nonzero spectrum; use the smaller one.
    let gram = if zg.ncols() <= zg.nrows() {
        zg.transpose() * zg
    } else {
        zg * zg.transpose()
    };
    let top = gram
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0_f64, |m, v| m.max(*v));
    2.0 * top / n
}

fn block_descent(
    z: &DMatrix<f64>,
    y: &[f64],
    groups: &[Vec<usize>],
    lambda_group: f64,
    lambda_l1: f64,
    opts: &BaselineOptions,
) -> (Vec<f64>, usize, bool) {
    let (n, p) = z.shape();
    let nf = n as f64;
    let blocks: Vec<DMatrix<f64>> = groups.iter().map(|g| z.select_columns(g.iter())).collect();
    let lips: Vec<f64> = blocks.iter().map(block_lipschitz).collect();
    let mut w = vec![0.0; p];
    let mut r = DVector::from_column_slice(y);
    for it in 1..=opts.max_iter {
        let mut max_move = 0.0_f64;
        for (g, members) in groups.iter().enumerate() {
            let zg = &blocks[g];
            let lip = lips[g];
            if lip == 0.0 {
                continue;
            }
            let lg = lambda_group * (members.len() as f64).sqrt();
            let old: Vec<f64> = members.iter().map(|&k| w[k]).collect();
            let mut wg = DVector::from_column_slice(&old);
            // Partial residual with this block removed.
            let rg = &r + zg * &wg;
            let corr = zg.transpose() * &rg * (2.0 / nf);
            let mut zero_test: Vec<f64> = corr.iter().copied().collect();
            sparse_group_prox(&mut zero_test, lambda_l1, lg);
            if zero_test.iter().all(|v| *v == 0.0) {
                wg.fill(0.0);
            } else {
                // Proximal gradient on the block with step 1/L.
                for _ in 0..opts.max_iter {
                    let grad = zg.transpose() * (zg * &wg) * (2.0 / nf) - &corr;
                    let mut next: Vec<f64> = wg.iter().zip(grad.iter()).map(|(a, b)| a - b / lip).collect();
                    sparse_group_prox(&mut next, lambda_l1 / lip, lg / lip);
                    let next = DVector::from_vec(next);
                    let step = (&next - &wg).amax();
                    wg = next;
                    if step <= opts.tol * 1e-2 {
                        break;
                    }
                }
            }
            let delta = &wg - DVector::from_column_slice(&old);
            if delta.iter().any(|d| *d != 0.0) {
                r -= zg * &delta;
                let moved = (zg * &delta).norm() / nf.sqrt();
                max_move = max_move.max(moved);
                for (i, &k) in members.iter().enumerate() {
                    w[k] = wg[i];
                }
            }
        }
        if max_move <= opts.tol {
            return (w, it, true);
        }
    }
    (w, opts.max_iter, false)
}

/// Sparse group Lasso:
/// `(1/N)‖y − Xw − b‖² + λ_g Σ_g √|g| ‖w_g‖₂ + λ₁‖w‖₁`.
pub fn glasso_fit(
    x: &DMatrix<f64>,
    y: &[f64],
    groups: &GroupSpec,
    lambda_group: f64,
    lambda_l1: f64,
    opts: &BaselineOptions,
) -> Result<LinearModel> {
    check_lambda("lambda_group", lambda_group)?;
    check_lambda("lambda_l1", lambda_l1)?;
    groups.validate(x.ncols())?;
    let prep = Prepared::new(x, y, opts.standardize)?;
    let (w, iterations, converged) =
        block_descent(&prep.z, &prep.yc, &groups.members(), lambda_group, lambda_l1, opts);
    let (weights, intercept) = prep.unscale(&w);
    Ok(LinearModel {
        params: BaselineParams::GroupLasso {
            lambda_group,
            lambda_l1,
            grouping: groups.mode,
        },
        input_shape: vec![x.ncols()],
        weights,
        intercept,
        diagnostics: LinearDiagnostics {
            iterations,
            converged,
        },
    })
}

/// Largest violation of the block optimality conditions of `model`.
///
/// For a group with `w_g = 0` the condition is
/// `‖S(−∇_g, λ₁)‖₂ ≤ λ_g√|g|`; otherwise `∇_g + λ₁ s + λ_g√|g| w_g/‖w_g‖ = 0`
/// for some `s ∈ ∂‖w_g‖₁`, measured coordinatewise at the best such `s`.
pub fn glasso_kkt_violation(
    x: &DMatrix<f64>,
    y: &[f64],
    groups: &GroupSpec,
    model: &LinearModel,
    opts: &BaselineOptions,
) -> Result<f64> {
    let BaselineParams::GroupLasso {
        lambda_group,
        lambda_l1,
        ..
    } = model.params
    else {
        return Err(Error::InvalidArgument("KKT check applies to glasso models".into()));
    };
    let prep = Prepared::new(x, y, opts.standardize)?;
    let n = x.nrows() as f64;
    let w: Vec<f64> = model.weights.iter().zip(&prep.scale).map(|(v, s)| v * s).collect();
    let r = DVector::from_column_slice(&prep.yc) - &prep.z * DVector::from_column_slice(&w);
    let grad = prep.z.transpose() * r * (-2.0 / n);
    let mut worst = 0.0_f64;
    for members in groups.members() {
        let lg = lambda_group * (members.len() as f64).sqrt();
        let norm = members.iter().map(|&k| w[k] * w[k]).sum::<f64>().sqrt();
        if norm == 0.0 {
            let mut v: Vec<f64> = members.iter().map(|&k| -grad[k]).collect();
            v.iter_mut().for_each(|x| *x = soft_threshold(*x, lambda_l1));
            let s = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            worst = worst.max((s - lg).max(0.0));
            continue;
        }
        for &k in &members {
            if prep.scale[k] == 0.0 {
                continue;
            }
            let g = grad[k] + lg * w[k] / norm;
            let v = if w[k] != 0.0 {
                (g + lambda_l1 * w[k].signum()).abs()
            } else {
                (g.abs() - lambda_l1).max(0.0)
            };
            worst = worst.max(v);
        }
    }
    Ok(worst)
}
