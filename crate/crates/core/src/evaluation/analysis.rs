use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::benchmark::{run_benchmark, BenchmarkInput};
use super::methods::{fit_method, FittedModel, Hyperparams, Method};
use super::metrics::{mean_std, rmse};
use super::protocol::{split_indices, ProtocolConfig};
use crate::data::aal116_labels;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::{Representation, N_ROIS};
use crate::seed::derive_seed;
use crate::tensor::DenseTensor;

/// How often an ROI was selected across models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiRank {
    /// Zero-based index along the ROI mode.
    pub roi: usize,
    /// AAL label when the ROI mode has 116 entries.
    pub label: Option<String>,
    /// Number of models selecting the ROI.
    pub frequency: usize,
    /// Mean over models of the summed |coefficient| on entries touching the
    /// ROI.
    pub mean_abs: f64,
}

/// Modes indexed by ROI: mode 0 and every other mode of the same length
/// (both axes of a connectivity graph).
pub fn roi_modes(shape: &[usize]) -> Vec<usize> {
    match shape.first() {
        None => Vec::new(),
        Some(&d) => (0..shape.len()).filter(|&j| shape[j] == d).collect(),
    }
}

/// Rank ROIs by selection frequency, then mean absolute mass, then index.
/// An ROI is selected by a model when any coefficient touching it exceeds
/// `zero_tol` in magnitude. Only selected ROIs are listed, at most `top_n`.
pub fn roi_ranking(coefs: &[DenseTensor], top_n: usize, zero_tol: f64) -> Result<Vec<RoiRank>> {
    let Some(first) = coefs.first() else {
        return Ok(Vec::new());
    };
    let shape = first.shape().to_vec();
    if let Some(c) = coefs.iter().find(|c| c.shape() != shape.as_slice()) {
        return Err(Error::ShapeMismatch {
            expected: shape,
            found: c.shape().to_vec(),
        });
    }
    let modes = roi_modes(&shape);
    let n_rois = shape[0];
    let strides: Vec<usize> = modes.iter().map(|&m| shape[m + 1..].iter().product()).collect();
    let mut frequency = vec![0usize; n_rois];
    let mut mass = vec![0.0; n_rois];
    for c in coefs {
        let mut hit = vec![false; n_rois];
        let mut local = vec![0.0; n_rois];
        for (idx, v) in c.values().iter().enumerate() {
            let a = v.abs();
            let mut touched: Vec<usize> = strides.iter().map(|s| (idx / s) % n_rois).collect();
            // A diagonal entry touches its ROI once.
            touched.sort_unstable();
            touched.dedup();
            for roi in touched {
                local[roi] += a;
                if a > zero_tol {
                    hit[roi] = true;
                }
            }
        }
        for r in 0..n_rois {
            frequency[r] += hit[r] as usize;
            mass[r] += local[r];
        }
    }
    let labels = (n_rois == N_ROIS).then(aal116_labels);
    let n = coefs.len() as f64;
    let mut ranked: Vec<RoiRank> = (0..n_rois)
        .filter(|&r| frequency[r] > 0)
        .map(|r| RoiRank {
            roi: r,
            label: labels.map(|l| l[r].to_string()),
            frequency: frequency[r],
            mean_abs: mass[r] / n,
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.frequency
            .cmp(&a.frequency)
            .then(b.mean_abs.total_cmp(&a.mean_abs))
            .then(a.roi.cmp(&b.roi))
    });
    ranked.truncate(top_n);
    Ok(ranked)
}

/// One point of a hyperparameter curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// The swept value (k or R).
    pub value: usize,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub sparsity_mean: f64,
    pub sparsity_std: f64,
    /// For k sweeps: whether the graph is fully connected.
    pub fully_connected: Option<bool>,
}

/// Test RMSE and sparsity of the proposed model against the graph size `k`,
/// with the rank fixed at `max_rank`. `build` produces the dataset of a
/// representation.
pub fn sweep_k<F>(
    build: F,
    base: Representation,
    k_values: &[usize],
    max_rank: usize,
    cfg: &ProtocolConfig,
) -> Result<Vec<CurvePoint>>
where
    F: Fn(&Representation) -> Result<Dataset> + Sync,
{
    if matches!(base, Representation::Concat) {
        return Err(Error::InvalidArgument("a k sweep needs a graph representation".into()));
    }
    if let Some(k) = k_values.iter().find(|k| !(1..=N_ROIS).contains(*k)) {
        return Err(Error::InvalidArgument(format!("k = {k} outside 1..={N_ROIS}")));
    }
    let mut fixed = cfg.clone();
    fixed.grids.proposed_ranks = vec![max_rank];
    k_values
        .par_iter()
        .map(|&k| {
            let rep = base.with_k(k);
            let input = BenchmarkInput {
                dataset: build(&rep)?,
                representation: rep.label(),
                score: String::new(),
            };
            let report = run_benchmark(&[input], &[Method::Proposed], &fixed)?;
            let a = &report.aggregates[0];
            Ok(CurvePoint {
                value: k,
                rmse_mean: a.rmse_mean,
                rmse_std: a.rmse_std,
                sparsity_mean: a.sparsity_mean,
                sparsity_std: a.sparsity_std,
                fully_connected: Some(k == N_ROIS),
            })
        })
        .collect()
}

/// Test RMSE and sparsity of the proposed model for each rank in `r_values`.
/// Every trial fits once at the largest rank and scores its truncations;
/// rank 0 is the empty model.
pub fn sweep_rank(ds: &Dataset, r_values: &[usize], cfg: &ProtocolConfig) -> Result<Vec<CurvePoint>> {
    cfg.validate()?;
    let top = *r_values
        .iter()
        .max()
        .ok_or_else(|| Error::InvalidArgument("empty rank list".into()))?;
    let fit_rank = top.max(1);
    // per_trial[t][i]: (rmse, sparsity) of r_values[i] in trial t.
    let per_trial: Vec<Vec<(f64, f64)>> = (0..cfg.n_trials)
        .into_par_iter()
        .map(|trial| {
            let (train_idx, test_idx) = split_indices(ds.responses(), cfg, trial)?;
            let train = ds.subset(&train_idx)?;
            let test = ds.subset(&test_idx)?;
            let seed = derive_seed(cfg.seed, &[trial as u64, Method::Proposed as u64, 1]);
            let FittedModel::Proposed(full) = fit_method(
                &train,
                &Hyperparams::Proposed { max_rank: fit_rank },
                &cfg.fit,
                &cfg.baseline,
                seed,
            )?
            else {
                unreachable!("proposed hyperparameters fit the proposed model")
            };
            r_values
                .iter()
                .map(|&r| {
                    let m = full.truncated(r);
                    let pred = (0..test.len())
                        .map(|i| m.predict(test.tensor(i)))
                        .collect::<Result<Vec<_>>>()?;
                    Ok((rmse(test.responses(), &pred)?, m.sparsity(cfg.zero_tol)))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(r_values
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let rm: Vec<f64> = per_trial.iter().map(|t| t[i].0).collect();
            let sp: Vec<f64> = per_trial.iter().map(|t| t[i].1).collect();
            let (rmse_mean, rmse_std) = mean_std(&rm);
            let (sparsity_mean, sparsity_std) = mean_std(&sp);
            CurvePoint {
                value: r,
                rmse_mean,
                rmse_std,
                sparsity_mean,
                sparsity_std,
                fully_connected: None,
            }
        })
        .collect())
}

/// Write a curve as CSV. The first column is named `parameter` (`k` or
/// `rank`); k curves carry a trailing `fully_connected` column.
pub fn write_curve_csv<W: Write>(points: &[CurvePoint], parameter: &str, w: W) -> Result<()> {
    let with_flag = points.iter().any(|p| p.fully_connected.is_some());
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec![parameter, "rmse_mean", "rmse_std", "sparsity_mean", "sparsity_std"];
    if with_flag {
        header.push("fully_connected");
    }
    out.write_record(&header)?;
    for p in points {
        let mut row = vec![
            p.value.to_string(),
            p.rmse_mean.to_string(),
            p.rmse_std.to_string(),
            p.sparsity_mean.to_string(),
            p.sparsity_std.to_string(),
        ];
        if with_flag {
            row.push(p.fully_connected.unwrap_or(false).to_string());
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}
