use nalgebra::{DMatrix, DVector};

use super::{BaselineParams, LinearDiagnostics, LinearModel, Prepared};
use crate::error::{Error, Result};

/// Relative eigenvalue floor below which a direction counts as null.
const RANK_TOL: f64 = 1e-10;

/// Eigenpairs of a symmetric matrix, largest first, dropping null directions.
fn sorted_eigen(m: DMatrix<f64>) -> Vec<(f64, DVector<f64>)> {
    let eig = m.symmetric_eigen();
    let mut pairs: Vec<(f64, DVector<f64>)> = eig
        .eigenvalues
        .iter()
        .zip(eig.eigenvectors.column_iter())
        .map(|(v, c)| (*v, c.into_owned()))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let top = pairs.first().map_or(0.0, |p| p.0);
    pairs.retain(|p| p.0 > RANK_TOL * top && p.0 > 0.0);
    pairs
}

/// Least squares on the leading `⌈fraction · min(N−1, p)⌉` principal
/// components of the centred design, folded back to feature weights.
pub fn pca_lr_fit(x: &DMatrix<f64>, y: &[f64], fraction: f64) -> Result<LinearModel> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "component fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let (n, p) = x.shape();
    if n == 0 || p == 0 {
        return Err(Error::EmptyData);
    }
    if n < 2 {
        return Err(Error::InvalidArgument("PCA needs at least two subjects".into()));
    }
    let prep = Prepared::new(x, y, false)?;
    let xc = &prep.z;
    let yc = DVector::from_column_slice(&prep.yc);
    let wanted = (fraction * (n - 1).min(p) as f64).ceil() as usize;

    let mut w = DVector::zeros(p);
    let kept;
    if p <= n {
        // C = XcᵀXc = V Λ Vᵀ, scores T = Xc V, β = Λ⁻¹ Vᵀ Xcᵀ y.
        let pairs = sorted_eigen(xc.transpose() * xc);
        kept = wanted.min(pairs.len());
        let xty = xc.transpose() * &yc;
        for (lambda, v) in pairs.iter().take(kept) {
            w += v * (v.dot(&xty) / lambda);
        }
    } else {
        // K = Xc Xcᵀ = U Λ Uᵀ, v_i = Xcᵀ u_i / √λ_i, so w = Σ (u_iᵀy / λ_i) Xcᵀ u_i.
        let pairs = sorted_eigen(xc * xc.transpose());
        kept = wanted.min(pairs.len());
        let mut acc = DVector::zeros(n);
        for (lambda, u) in pairs.iter().take(kept) {
            acc += u * (u.dot(&yc) / lambda);
        }
        w = xc.transpose() * acc;
    }
    let (weights, intercept) = prep.unscale(w.as_slice());
    Ok(LinearModel {
        params: BaselineParams::PcaLr {
            fraction,
            components: kept,
        },
        input_shape: vec![p],
        weights,
        intercept,
        diagnostics: LinearDiagnostics {
            iterations: 1,
            converged: true,
        },
    })
}
