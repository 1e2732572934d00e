//! Alternating mode-wise Lasso for one sparse unit-rank term.
//!
//! With all factors but `w(j)` fixed, `⟨W, X_i⟩ = ⟨w(j), z_i⟩` where
//! `z_i = contract_except(X_i, W, j)`, and `‖W‖₁ = ‖w(j)‖₁ Π_{k≠j} ‖w(k)‖₁`.
//! Each mode update is therefore an ordinary Lasso in `w(j)` with penalty
//! `λ Π_{k≠j} ‖w(k)‖₁`, solved here by cyclic coordinate descent on its
//! Gram form.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::tensor::{contract_except, dot, inner_product, l1, l2, DenseTensor, UnitRankTensor};

pub(crate) const POWER_ITERS: usize = 20;
const CD_MAX_SWEEPS: usize = 10_000;
const CD_TOL: f64 = 1e-13;

#[inline]
pub(crate) fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub(crate) fn centered(v: &[f64], center: bool) -> Vec<f64> {
    if !center {
        return v.to_vec();
    }
    let m = mean(v);
    v.iter().map(|x| x - m).collect()
}

/// Penalty multiplier seen by mode `mode`: `Π_{k≠mode} ‖w(k)‖₁`.
pub(crate) fn penalty_scale(w: &UnitRankTensor, mode: usize) -> f64 {
    w.factors()
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != mode)
        .map(|(_, f)| l1(f))
        .product()
}

/// Quadratic form of the mode subproblem:
/// `f(v) = vᵀHv − 2cᵀv + s + λ_eff ‖v‖₁`.
pub(crate) struct ModeProblem {
    dim: usize,
    gram: Vec<f64>,
    corr: Vec<f64>,
    y_sq: f64,
}

impl ModeProblem {
    pub(crate) fn build(
        xs: &[&DenseTensor],
        y: &[f64],
        w: &UnitRankTensor,
        mode: usize,
        center: bool,
    ) -> Self {
        let n = xs.len();
        let dim = w.factor(mode).len();
        let mut rows: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| contract_except(x, w, mode).expect("shapes validated by caller"))
            .collect();
        let yc = centered(y, center);
        if center {
            let mut m = vec![0.0; dim];
            for r in &rows {
                m.iter_mut().zip(r).for_each(|(a, b)| *a += b);
            }
            m.iter_mut().for_each(|a| *a /= n as f64);
            for r in &mut rows {
                r.iter_mut().zip(&m).for_each(|(a, b)| *a -= b);
            }
        }
        let inv_n = 1.0 / n as f64;
        let mut gram = vec![0.0; dim * dim];
        let mut corr = vec![0.0; dim];
        for (r, &yi) in rows.iter().zip(&yc) {
            for a in 0..dim {
                let ra = r[a];
                if ra == 0.0 {
                    continue;
                }
                corr[a] += ra * yi;
                let row = &mut gram[a * dim..(a + 1) * dim];
                for b in a..dim {
                    row[b] += ra * r[b];
                }
            }
        }
        for a in 0..dim {
            corr[a] *= inv_n;
            for b in a..dim {
                let v = gram[a * dim + b] * inv_n;
                gram[a * dim + b] = v;
                gram[b * dim + a] = v;
            }
        }
        let y_sq = yc.iter().map(|v| v * v).sum::<f64>() * inv_n;
        Self {
            dim,
            gram,
            corr,
            y_sq,
        }
    }

    fn h(&self, a: usize, b: usize) -> f64 {
        self.gram[a * self.dim + b]
    }

    fn hv(&self, v: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|a| dot(&self.gram[a * self.dim..(a + 1) * self.dim], v))
            .collect()
    }

    pub(crate) fn objective(&self, v: &[f64], lambda_eff: f64) -> f64 {
        let hv = self.hv(v);
        (dot(v, &hv) - 2.0 * dot(&self.corr, v) + self.y_sq).max(0.0) + lambda_eff * l1(v)
    }

    /// Smallest effective penalty at which `v = 0` is optimal.
    pub(crate) fn zero_threshold(&self) -> f64 {
        2.0 * self.corr.iter().fold(0.0_f64, |m, c| m.max(c.abs()))
    }

    /// Cyclic coordinate descent, warm-started from `v`.
    pub(crate) fn solve(&self, v: &mut [f64], lambda_eff: f64) {
        let mut hv = self.hv(v);
        let half = 0.5 * lambda_eff;
        for _ in 0..CD_MAX_SWEEPS {
            let mut max_delta = 0.0_f64;
            let mut max_abs = 0.0_f64;
            for k in 0..self.dim {
                let hkk = self.h(k, k);
                let old = v[k];
                let new = if hkk > 0.0 {
                    let rho = self.corr[k] - hv[k] + hkk * old;
                    soft_threshold(rho, half) / hkk
                } else {
                    0.0
                };
                let delta = new - old;
                if delta != 0.0 {
                    v[k] = new;
                    let col = &self.gram[k * self.dim..(k + 1) * self.dim];
                    hv.iter_mut().zip(col).for_each(|(a, h)| *a += h * delta);
                }
                max_delta = max_delta.max(delta.abs());
                max_abs = max_abs.max(new.abs());
            }
            if max_delta <= CD_TOL * max_abs.max(f64::MIN_POSITIVE) {
                break;
            }
        }
    }

    /// Largest violation of the Lasso subgradient conditions at `v`.
    pub(crate) fn kkt_violation(&self, v: &[f64], lambda_eff: f64) -> f64 {
        let hv = self.hv(v);
        (0..self.dim)
            .map(|k| {
                let g = 2.0 * (hv[k] - self.corr[k]);
                if v[k] != 0.0 {
                    (g + lambda_eff * v[k].signum()).abs()
                } else {
                    (g.abs() - lambda_eff).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }
}

/// `(1/N) Σ (p_i − y_i)² + λ ‖W‖₁`, with both sides centred when an intercept
/// is profiled out.
pub(crate) fn objective(
    xs: &[&DenseTensor],
    y: &[f64],
    w: &UnitRankTensor,
    lambda: f64,
    center: bool,
) -> f64 {
    let preds: Vec<f64> = xs
        .iter()
        .map(|x| inner_product(x, w).expect("shapes validated by caller"))
        .collect();
    let p = centered(&preds, center);
    let yc = centered(y, center);
    let sse: f64 = p.iter().zip(&yc).map(|(a, b)| (a - b) * (a - b)).sum();
    sse / y.len() as f64 + lambda * w.l1_norm()
}

pub(crate) fn zero_objective(y: &[f64], center: bool) -> f64 {
    let yc = centered(y, center);
    yc.iter().map(|v| v * v).sum::<f64>() / y.len() as f64
}

pub(crate) struct FixedFit {
    pub w: UnitRankTensor,
    pub iterations: usize,
    pub converged: bool,
}

/// Alternating minimisation at a fixed `λ`, starting from `init`.
pub(crate) fn solve_fixed(
    xs: &[&DenseTensor],
    y: &[f64],
    lambda: f64,
    init: &UnitRankTensor,
    max_iters: usize,
    tol: f64,
    center: bool,
) -> FixedFit {
    let mut w = init.clone();
    let order = w.order();
    let mut prev = objective(xs, y, &w, lambda, center);
    let mut last = prev;
    for it in 1..=max_iters {
        for j in 0..order {
            let problem = ModeProblem::build(xs, y, &w, j, center);
            let eff = lambda * penalty_scale(&w, j);
            problem.solve(w.factor_mut(j), eff);
            if w.factor(j).iter().all(|&v| v == 0.0) {
                let zero = UnitRankTensor::zeros(&w.shape()).expect("shape is valid");
                return FixedFit {
                    w: zero,
                    iterations: it,
                    converged: true,
                };
            }
            last = problem.objective(w.factor(j), eff);
        }
        w.canonicalize();
        if (prev - last).abs() <= tol * prev.abs().max(f64::MIN_POSITIVE) {
            return FixedFit {
                w,
                iterations: it,
                converged: true,
            };
        }
        prev = last;
    }
    FixedFit {
        w,
        iterations: max_iters,
        converged: false,
    }
}

/// Unit-rank tensor supported on the single entry of largest `|G|`,
/// `G = Σ_i y_i X_i`, scaled by its least-squares coefficient. This is the
/// first term to become active as `λ` decreases from the global `λ_max`.
pub(crate) fn one_hot_start(xs: &[&DenseTensor], y: &[f64], center: bool) -> Option<UnitRankTensor> {
    let shape = xs[0].shape().to_vec();
    let yc = centered(y, center);
    let mut g = DenseTensor::zeros(&shape).expect("shape is valid");
    for (x, &yi) in xs.iter().zip(&yc) {
        if yi != 0.0 {
            g.add_scaled(yi, x).expect("shapes validated by caller");
        }
    }
    let (best, gmax) = g
        .values()
        .iter()
        .enumerate()
        .fold((0, 0.0_f64), |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) });
    if gmax == 0.0 || !gmax.is_finite() {
        return None;
    }
    let xcol: Vec<f64> = xs.iter().map(|x| x.values()[best]).collect();
    let xc = centered(&xcol, center);
    let xx = dot(&xc, &xc);
    if xx == 0.0 {
        return None;
    }
    let mut rem = best;
    let mut factors: Vec<Vec<f64>> = vec![Vec::new(); shape.len()];
    for (j, &d) in shape.iter().enumerate().rev() {
        let mut f = vec![0.0; d];
        f[rem % d] = 1.0;
        rem /= d;
        factors[j] = f;
    }
    let s = dot(&xc, &yc) / xx;
    let i0 = factors[0].iter().position(|&v| v == 1.0).expect("one-hot");
    factors[0][i0] = s;
    let mut w = UnitRankTensor::new(factors).ok()?;
    w.canonicalize();
    Some(w)
}

/// Rank-1 power iteration on `G = Σ_i y_i X_i`, scaled by the least-squares
/// coefficient of its predictions. `None` when `G` or the predictions vanish.
pub(crate) fn warm_start<R: Rng>(
    xs: &[&DenseTensor],
    y: &[f64],
    center: bool,
    rng: &mut R,
) -> Option<UnitRankTensor> {
    let shape = xs[0].shape().to_vec();
    let yc = centered(y, center);
    let mut g = DenseTensor::zeros(&shape).expect("shape is valid");
    for (x, &yi) in xs.iter().zip(&yc) {
        if yi != 0.0 {
            g.add_scaled(yi, x).expect("shapes validated by caller");
        }
    }
    if g.values().iter().all(|&v| v == 0.0) {
        return None;
    }
    let factors: Vec<Vec<f64>> = shape
        .iter()
        .map(|&d| {
            let mut f: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let n = l2(&f);
            f.iter_mut().for_each(|v| *v /= n);
            f
        })
        .collect();
    let mut u = UnitRankTensor::new(factors).expect("finite draws");
    for _ in 0..POWER_ITERS {
        for j in 0..u.order() {
            let z = contract_except(&g, &u, j).expect("shape is valid");
            let n = l2(&z);
            if n == 0.0 || !n.is_finite() {
                return None;
            }
            *u.factor_mut(j) = z.into_iter().map(|v| v / n).collect();
        }
    }
    let preds: Vec<f64> = xs
        .iter()
        .map(|x| inner_product(x, &u).expect("shape is valid"))
        .collect();
    let pc = centered(&preds, center);
    let pp = dot(&pc, &pc);
    if pp == 0.0 {
        return None;
    }
    let scale = dot(&pc, &yc) / pp;
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    u.factor_mut(0).iter_mut().for_each(|v| *v *= scale);
    u.canonicalize();
    Some(u)
}
