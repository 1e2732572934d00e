use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::methods::{fit_method, FittedModel, Hyperparams, Method};
use super::metrics::rmse;
use super::protocol::{complement, fold_indices, ProtocolConfig};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// Outcome of a grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub best: Hyperparams,
    /// Mean validation RMSE of `best`.
    pub best_rmse: f64,
    /// Mean validation RMSE of every grid point, in grid order.
    pub scores: Vec<(Hyperparams, f64)>,
}

/// Pick the grid point with the lowest mean validation RMSE over
/// `cfg.cv_folds` folds of `train`; ties go to the earliest point.
///
/// Rank grids of the proposed model are scored from one fit per fold at the
/// largest rank, truncated to each candidate.
pub fn cross_validate(train: &Dataset, grid: &[Hyperparams], cfg: &ProtocolConfig, seed: u64) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty hyperparameter grid".into()));
    }
    let method = grid[0].method();
    if grid.iter().any(|h| h.method() != method) {
        return Err(Error::InvalidArgument("a grid must hold a single method".into()));
    }
    let n = train.len();
    if n < cfg.cv_folds {
        return Err(Error::InvalidArgument(format!(
            "{n} training subjects cannot form {} folds",
            cfg.cv_folds
        )));
    }
    let folds = fold_indices(n, cfg.cv_folds, derive_seed(seed, &[0]))?;

    // errors[f][g]: validation RMSE of grid point g on fold f.
    let errors: Vec<Vec<f64>> = folds
        .par_iter()
        .enumerate()
        .map(|(f, val_idx)| {
            let fit_ds = train.subset(&complement(n, val_idx))?;
            let val = train.subset(val_idx)?;
            let fold_seed = derive_seed(seed, &[1, f as u64]);
            if method == Method::Proposed {
                proposed_fold_errors(&fit_ds, &val, grid, cfg, fold_seed)
            } else {
                grid.par_iter()
                    .map(|h| {
                        let m = fit_method(&fit_ds, h, &cfg.fit, &cfg.baseline, fold_seed)?;
                        rmse(val.responses(), &m.predict_all(&val)?)
                    })
                    .collect()
            }
        })
        .collect::<Result<_>>()?;

    let k = folds.len() as f64;
    let scores: Vec<(Hyperparams, f64)> = grid
        .iter()
        .enumerate()
        .map(|(g, h)| (*h, errors.iter().map(|e| e[g]).sum::<f64>() / k))
        .collect();
    let mut best = 0;
    for (g, s) in scores.iter().enumerate() {
        if s.1 < scores[best].1 {
            best = g;
        }
    }
    if !scores[best].1.is_finite() {
        return Err(Error::Numerical("no grid point produced a finite validation error".into()));
    }
    Ok(CvResult {
        best: scores[best].0,
        best_rmse: scores[best].1,
        scores,
    })
}

fn proposed_fold_errors(
    fit_ds: &Dataset,
    val: &Dataset,
    grid: &[Hyperparams],
    cfg: &ProtocolConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let ranks: Vec<usize> = grid
        .iter()
        .map(|h| match h {
            Hyperparams::Proposed { max_rank } => *max_rank,
            _ => unreachable!("grid checked to be single-method"),
        })
        .collect();
    let top = *ranks.iter().max().expect("nonempty grid");
    let full = match fit_method(fit_ds, &Hyperparams::Proposed { max_rank: top }, &cfg.fit, &cfg.baseline, seed)? {
        FittedModel::Proposed(m) => m,
        FittedModel::Linear(_) => unreachable!("proposed hyperparameters fit the proposed model"),
    };
    ranks
        .iter()
        .map(|&r| {
            let m = full.truncated(r);
            let pred: Vec<f64> = (0..val.len()).map(|i| m.predict(val.tensor(i))).collect::<Result<_>>()?;
            rmse(val.responses(), &pred)
        })
        .collect()
}

/// Full search for `method`: the first-stage grid, then for Group Lasso an
/// optional finer pass around the best coarse penalties.
pub fn tune(train: &Dataset, method: Method, cfg: &ProtocolConfig, seed: u64) -> Result<CvResult> {
    let grid = cfg.grids.candidates(method, train.shape());
    if grid.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no {method} grid points apply to shape {:?}",
            train.shape()
        )));
    }
    let coarse = cross_validate(train, &grid, cfg, seed)?;
    let Hyperparams::Glasso {
        lambda_group,
        lambda_l1,
        grouping,
    } = coarse.best
    else {
        return Ok(coarse);
    };
    if !cfg.grids.glasso_refine {
        return Ok(coarse);
    }
    let fine: Vec<Hyperparams> = refine(lambda_group)
        .iter()
        .flat_map(|&g| {
            refine(lambda_l1).into_iter().map(move |l| Hyperparams::Glasso {
                lambda_group: g,
                lambda_l1: l,
                grouping,
            })
        })
        .collect();
    let second = cross_validate(train, &fine, cfg, seed)?;
    // The fine grid starts at the coarse optimum, so the search never loses
    // ground; keep the coarse point on exact ties.
    Ok(if second.best_rmse < coarse.best_rmse { second } else { coarse })
}

/// `{1, 2, …, 10} × v`, or just `[0]` for a zero penalty.
fn refine(v: f64) -> Vec<f64> {
    if v == 0.0 {
        return vec![0.0];
    }
    (1..=10).map(|i| i as f64 * v).collect()
}
