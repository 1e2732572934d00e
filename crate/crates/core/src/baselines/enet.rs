use nalgebra::DMatrix;

use super::{check_lambda, BaselineOptions, BaselineParams, LinearDiagnostics, LinearModel, Prepared};
use crate::error::{Error, Result};
use crate::regression::soft_threshold;

/// Cyclic coordinate descent on
/// `(1/N)‖y − Zw‖² + λ(α‖w‖₁ + (1−α)‖w‖²)` with active-set passes.
fn coordinate_descent(
    z: &DMatrix<f64>,
    y: &[f64],
    lambda: f64,
    alpha: f64,
    opts: &BaselineOptions,
) -> (Vec<f64>, usize, bool) {
    let (n, p) = z.shape();
    let nf = n as f64;
    let col_sq: Vec<f64> = z.column_iter().map(|c| c.norm_squared()).collect();
    let l1 = lambda * alpha;
    let l2 = 2.0 * lambda * (1.0 - alpha);
    let mut w = vec![0.0; p];
    let mut r = y.to_vec();
    let mut iters = 0;

    let sweep = |w: &mut [f64], r: &mut [f64], only_active: bool| -> f64 {
        let mut max_move = 0.0_f64;
        for k in 0..p {
            if col_sq[k] == 0.0 || (only_active && w[k] == 0.0) {
                continue;
            }
            let col = z.column(k);
            let a = 2.0 * col_sq[k] / nf;
            let rho = 2.0 * col.iter().zip(r.iter()).map(|(c, v)| c * v).sum::<f64>() / nf + a * w[k];
            let new = soft_threshold(rho, l1) / (a + l2);
            let delta = new - w[k];
            if delta != 0.0 {
                r.iter_mut().zip(col.iter()).for_each(|(v, c)| *v -= delta * c);
                w[k] = new;
                max_move = max_move.max(delta.abs() * (col_sq[k] / nf).sqrt());
            }
        }
        max_move
    };

    while iters < opts.max_iter {
        iters += 1;
        if sweep(&mut w, &mut r, false) <= opts.tol {
            return (w, iters, true);
        }
        while iters < opts.max_iter {
            iters += 1;
            if sweep(&mut w, &mut r, true) <= opts.tol {
                break;
            }
        }
    }
    (w, iters, false)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    Ok(())
}

/// Elastic Net: minimizes `(1/N)‖y − Xw − b‖² + λ(α‖w‖₁ + (1−α)‖w‖²₂)`.
pub fn enet_fit(
    x: &DMatrix<f64>,
    y: &[f64],
    lambda: f64,
    alpha: f64,
    opts: &BaselineOptions,
) -> Result<LinearModel> {
    check_lambda("lambda", lambda)?;
    check_alpha(alpha)?;
    let prep = Prepared::new(x, y, opts.standardize)?;
    let (w, iterations, converged) = coordinate_descent(&prep.z, &prep.yc, lambda, alpha, opts);
    let (weights, intercept) = prep.unscale(&w);
    Ok(LinearModel {
        params: BaselineParams::ElasticNet { lambda, alpha },
        input_shape: vec![x.ncols()],
        weights,
        intercept,
        diagnostics: LinearDiagnostics {
            iterations,
            converged,
        },
    })
}

/// Lasso: minimizes `(1/N)‖y − Xw − b‖² + λ‖w‖₁`.
pub fn lasso_fit(x: &DMatrix<f64>, y: &[f64], lambda: f64, opts: &BaselineOptions) -> Result<LinearModel> {
    let mut m = enet_fit(x, y, lambda, 1.0, opts)?;
    m.params = BaselineParams::Lasso { lambda };
    Ok(m)
}

/// Largest subgradient violation of `model` for the Elastic Net objective in
/// the (possibly standardized) coordinates the solver works in.
pub fn enet_kkt_violation(
    x: &DMatrix<f64>,
    y: &[f64],
    model: &LinearModel,
    opts: &BaselineOptions,
) -> Result<f64> {
    let (lambda, alpha) = match model.params {
        BaselineParams::Lasso { lambda } => (lambda, 1.0),
        BaselineParams::ElasticNet { lambda, alpha } => (lambda, alpha),
        _ => {
            return Err(Error::InvalidArgument(
                "KKT check applies to lasso and enet models".into(),
            ))
        }
    };
    let prep = Prepared::new(x, y, opts.standardize)?;
    let n = x.nrows() as f64;
    let w: Vec<f64> = model
        .weights
        .iter()
        .zip(&prep.scale)
        .map(|(v, s)| v * s)
        .collect();
    let fitted = &prep.z * nalgebra::DVector::from_column_slice(&w);
    let r: Vec<f64> = prep.yc.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    let mut worst = 0.0_f64;
    for (k, col) in prep.z.column_iter().enumerate() {
        if prep.scale[k] == 0.0 {
            continue;
        }
        let g = -2.0 * col.iter().zip(&r).map(|(c, v)| c * v).sum::<f64>() / n
            + 2.0 * lambda * (1.0 - alpha) * w[k];
        let v = if w[k] != 0.0 {
            (g + lambda * alpha * w[k].signum()).abs()
        } else {
            (g.abs() - lambda * alpha).max(0.0)
        };
        worst = worst.max(v);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::testutil::{ols, problem};
    use nalgebra::DVector;

    fn raw() -> BaselineOptions {
        BaselineOptions {
            standardize: false,
            ..BaselineOptions::default()
        }
    }

    #[test]
    fn lambda_zero_is_least_squares() {
        let (x, y) = problem(80, 6, 1);
        let (beta, b0) = ols(&x, &y);
        for opts in [raw(), BaselineOptions::default()] {
            let m = lasso_fit(&x, &y, 0.0, &opts).unwrap();
            assert!(m.diagnostics.converged);
            for (a, b) in m.weights.iter().zip(&beta) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
            assert!((m.intercept - b0).abs() < 1e-6);
        }
    }

    #[test]
    fn above_lambda_max_everything_is_zero() {
        let (x, y) = problem(50, 5, 2);
        let prep = Prepared::new(&x, &y, false).unwrap();
        let corr = prep.z.transpose() * DVector::from_column_slice(&prep.yc);
        let lambda_max = 2.0 / 50.0 * corr.amax();
        let m = lasso_fit(&x, &y, lambda_max * (1.0 + 1e-12), &raw()).unwrap();
        assert!(m.weights.iter().all(|w| *w == 0.0));
        assert!((m.intercept - y.iter().sum::<f64>() / 50.0).abs() < 1e-12);
        let m = lasso_fit(&x, &y, lambda_max * 0.99, &raw()).unwrap();
        assert!(m.weights.iter().any(|w| *w != 0.0));
    }

    #[test]
    fn single_standardized_feature_is_soft_thresholded_ols() {
        let x = DMatrix::from_column_slice(4, 1, &[-1.0, 1.0, -1.0, 1.0]);
        let y = [0.0, 3.0, 1.0, 4.0];
        // Unit-variance feature: OLS slope 1.5, objective minimizer S(2·1.5, λ)/2.
        for lambda in [0.0, 1.0, 2.5, 3.5] {
            let m = lasso_fit(&x, &y, lambda, &BaselineOptions::default()).unwrap();
            let expected = soft_threshold(3.0, lambda) / 2.0;
            assert!((m.weights[0] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn alpha_one_is_lasso_and_alpha_zero_is_ridge() {
        let (x, y) = problem(60, 5, 3);
        let lasso = lasso_fit(&x, &y, 0.05, &raw()).unwrap();
        let enet = enet_fit(&x, &y, 0.05, 1.0, &raw()).unwrap();
        for (a, b) in lasso.weights.iter().zip(&enet.weights) {
            assert!((a - b).abs() < 1e-8);
        }

        let lambda = 0.7;
        let m = enet_fit(&x, &y, lambda, 0.0, &raw()).unwrap();
        let prep = Prepared::new(&x, &y, false).unwrap();
        let n = 60.0;
        let a = prep.z.transpose() * &prep.z + DMatrix::identity(5, 5) * (n * lambda);
        let rhs = prep.z.transpose() * DVector::from_column_slice(&prep.yc);
        let ridge = a.cholesky().unwrap().solve(&rhs);
        for (a, b) in m.weights.iter().zip(ridge.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
        let big = enet_fit(&x, &y, 1e6, 0.5, &raw()).unwrap();
        assert!(big.weights.iter().all(|w| *w == 0.0));
    }

    #[test]
    fn kkt_holds_and_support_shrinks() {
        let (x, y) = problem(70, 8, 4);
        let mut last = usize::MAX;
        for lambda in [0.01, 0.1, 0.5, 1.0, 2.0, 5.0] {
            for opts in [raw(), BaselineOptions::default()] {
                let m = lasso_fit(&x, &y, lambda, &opts).unwrap();
                assert!(enet_kkt_violation(&x, &y, &m, &opts).unwrap() < 1e-6);
                let e = enet_fit(&x, &y, lambda, 0.4, &opts).unwrap();
                assert!(enet_kkt_violation(&x, &y, &e, &opts).unwrap() < 1e-6);
            }
            let nnz = lasso_fit(&x, &y, lambda, &raw())
                .unwrap()
                .weights
                .iter()
                .filter(|w| **w != 0.0)
                .count();
            assert!(nnz <= last);
            last = nnz;
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let (x, y) = problem(10, 2, 5);
        assert!(lasso_fit(&x, &y, -1.0, &raw()).is_err());
        assert!(enet_fit(&x, &y, 1.0, 1.5, &raw()).is_err());
        assert!(lasso_fit(&x, &y[..5], 1.0, &raw()).is_err());
        let empty = DMatrix::<f64>::zeros(0, 2);
        assert!(matches!(lasso_fit(&empty, &[], 1.0, &raw()), Err(Error::EmptyData)));
    }
}
