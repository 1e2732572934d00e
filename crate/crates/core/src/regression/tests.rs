use super::*;
use crate::tensor::inner_product_dense;
use rand::Rng;
use rand_distr::StandardNormal;

fn component(factors: Vec<Vec<f64>>) -> Component {
    Component {
        tensor: UnitRankTensor::new(factors).unwrap(),
        lambda: 0.5,
        diagnostics: StepDiagnostics {
            lambda_max: 1.0,
            iterations: 1,
            converged: true,
            validation_rmse: None,
            objective: 0.0,
            zero_objective: 0.0,
        },
    }
}

fn model(shape: Vec<usize>, components: Vec<Component>) -> RegressionModel {
    let n = components.len() + 1;
    RegressionModel {
        input_shape: shape,
        components,
        intercept_path: vec![0.0; n],
        train_rmse_path: vec![0.0; n],
    }
}

fn random_dataset(shape: &[usize], n: usize, seed: u64) -> Dataset {
    let mut rng = rng_for(seed, &[]);
    let len: usize = shape.iter().product();
    let factors: Vec<Vec<f64>> = shape
        .iter()
        .map(|&d| (0..d).map(|i| if i % 2 == 0 { 1.0 + i as f64 } else { 0.0 }).collect())
        .collect();
    let wt = UnitRankTensor::new(factors).unwrap().materialize();
    let _ = len;
    let mut ids = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..n {
        let v: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        let x = DenseTensor::new(shape.to_vec(), v).unwrap();
        let noise: f64 = rng.sample(StandardNormal);
        ys.push(inner_product_dense(&x, &wt).unwrap() + 0.1 * noise);
        xs.push(x);
        ids.push(format!("s{i}"));
    }
    Dataset::new(ids, xs, ys).unwrap()
}

#[test]
fn zero_residuals_give_zero_component() {
    let ds = random_dataset(&[4, 3], 20, 1);
    let xs = ds.tensors();
    let fit = fit_unit_rank(&xs, &[0.0; 20], &FitConfig::default()).unwrap();
    assert!(fit.is_zero());
    let m = fit_traced(&ds.with_responses(vec![0.0; 20]).unwrap(), &FitConfig::default())
        .unwrap()
        .0;
    assert_eq!(m.rank(), 0);
    assert_eq!(m.predict(ds.tensor(0)).unwrap(), 0.0);
}

#[test]
fn scalar_case_is_soft_thresholding() {
    let x = DenseTensor::new(vec![1, 1], vec![2.0]).unwrap();
    let cfg = FitConfig {
        fit_intercept: false,
        convergence_tol: 1e-14,
        ..FitConfig::default()
    };
    let (c, y, n) = (2.0_f64, 3.0_f64, 1.0_f64);
    for lambda in [0.0, 1.0, 4.0, 11.9, 20.0] {
        let fit = fit_unit_rank_at(&[&x], &[y], lambda, &cfg).unwrap();
        let expected = (y / c).signum() * ((y / c).abs() - lambda * n / (2.0 * c * c)).max(0.0);
        let got = fit.component.materialize().values()[0];
        assert!((got - expected).abs() < 1e-12, "λ={lambda}: {got} vs {expected}");
    }
    let fit = fit_unit_rank_at(&[&x], &[y], 1.0, &cfg).unwrap();
    assert!((fit.component.materialize().values()[0] - 1.375).abs() < 1e-12);
}

#[test]
fn predict_examples() {
    let x = DenseTensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(model(vec![2, 2], vec![]).predict(&x).unwrap(), 0.0);
    let m = model(vec![2, 2], vec![component(vec![vec![1.0, 0.0], vec![0.0, 1.0]])]);
    assert_eq!(m.predict(&x).unwrap(), 2.0);
    let bad = DenseTensor::new(vec![4], vec![1.0; 4]).unwrap();
    assert!(matches!(m.predict(&bad), Err(Error::ShapeMismatch { .. })));
}

#[test]
fn coefficient_tensor_sums_components() {
    let empty = model(vec![2, 3], vec![]);
    assert!(empty.coefficient_tensor().values().iter().all(|&v| v == 0.0));

    let a = vec![vec![1.0, -2.0], vec![0.5, 0.0, 3.0]];
    let b = vec![vec![0.0, 4.0], vec![1.0, 1.0, -1.0]];
    let one = model(vec![2, 3], vec![component(a.clone())]);
    assert_eq!(
        one.coefficient_tensor().values(),
        UnitRankTensor::new(a.clone()).unwrap().materialize().values()
    );
    let two = model(vec![2, 3], vec![component(a.clone()), component(b.clone())]);
    let mut expected = vec![0.0; 6];
    for f in [&a, &b] {
        for i in 0..2 {
            for j in 0..3 {
                expected[i * 3 + j] += f[0][i] * f[1][j];
            }
        }
    }
    assert_eq!(two.coefficient_tensor().values(), expected.as_slice());

    let x = DenseTensor::new(vec![2, 3], vec![0.3, -1.0, 2.0, 0.7, 5.0, -0.2]).unwrap();
    let direct = inner_product_dense(&x, &two.coefficient_tensor()).unwrap();
    assert!((two.predict(&x).unwrap() - direct).abs() < 1e-10);
}

#[test]
fn sparsity_examples() {
    assert_eq!(model(vec![3, 2], vec![]).sparsity(DEFAULT_ZERO_TOL), 100.0);
    let m = model(vec![3, 2], vec![component(vec![vec![1.0, 0.0, 0.0], vec![1.0, 0.0]])]);
    assert!((m.sparsity(DEFAULT_ZERO_TOL) - 500.0 / 6.0).abs() < 1e-12);
    let dense = model(vec![3, 2], vec![component(vec![vec![1.0, 2.0, 3.0], vec![1.0, -1.0]])]);
    assert_eq!(dense.sparsity(DEFAULT_ZERO_TOL), 0.0);
}

#[test]
fn modality_contribution_examples() {
    let m = model(vec![2, 3], vec![component(vec![vec![1.0, 1.0], vec![2.0, -1.0, 0.0]])]);
    let c = m.modality_contribution(1).unwrap();
    assert_eq!(
        c,
        vec![(Modality::Vbm, 2.0), (Modality::Fdg, 1.0), (Modality::Av45, 0.0)]
    );

    let m = model(
        vec![2, 3],
        vec![
            component(vec![vec![1.0, 1.0], vec![1.0, 0.0, 0.0]]),
            component(vec![vec![1.0, 1.0], vec![3.0, 0.0, 0.0]]),
        ],
    );
    let c = m.modality_contribution(1).unwrap();
    assert_eq!(c[0], (Modality::Vbm, 2.0));
    assert_eq!(c[1].1, 0.0);
    assert_eq!(c[2].1, 0.0);

    let m = model(vec![2, 3], vec![component(vec![vec![1.0, 1.0], vec![0.0; 3]])]);
    let order: Vec<Modality> = m.modality_contribution(1).unwrap().into_iter().map(|p| p.0).collect();
    assert_eq!(order, Modality::ALL.to_vec());

    assert!(matches!(
        m.modality_contribution(0),
        Err(Error::InvalidArgument(_))
    ));
    assert!(m.modality_contribution(5).is_err());
}

#[test]
fn fit_is_deterministic_and_round_trips() {
    let ds = random_dataset(&[5, 4, 3], 60, 7);
    let cfg = FitConfig {
        max_rank: 3,
        seed: 11,
        ..FitConfig::default()
    };
    let a = fit(&ds, &cfg).unwrap();
    let b = fit(&ds, &cfg).unwrap();
    assert_eq!(a, b);
    let json = a.to_json().unwrap();
    assert_eq!(json, b.to_json().unwrap());
    let back = RegressionModel::from_json(&json).unwrap();
    assert_eq!(back, a);
    assert_eq!(back.to_json().unwrap(), json);
}

#[test]
fn truncation_matches_smaller_max_rank() {
    let ds = random_dataset(&[5, 4, 3], 60, 3);
    let big = fit(
        &ds,
        &FitConfig {
            max_rank: 4,
            seed: 5,
            ..FitConfig::default()
        },
    )
    .unwrap();
    for r in 1..=4 {
        let small = fit(
            &ds,
            &FitConfig {
                max_rank: r,
                seed: 5,
                ..FitConfig::default()
            },
        )
        .unwrap();
        assert_eq!(small, big.truncated(r), "max_rank {r}");
    }
}

#[test]
fn bookkeeping_residual_matches_recomputation() {
    let ds = random_dataset(&[6, 4, 3], 80, 9);
    let cfg = FitConfig {
        max_rank: 5,
        ..FitConfig::default()
    };
    let (m, residual) = fit_traced(&ds, &cfg).unwrap();
    assert!(m.rank() >= 1);
    for i in 0..ds.len() {
        let recomputed = ds.responses()[i] - (m.predict(ds.tensor(i)).unwrap() - m.intercept());
        assert!((recomputed - residual[i]).abs() < 1e-10);
    }
    for w in m.train_rmse_path.windows(2) {
        assert!(w[1] <= w[0]);
    }
    for c in &m.components {
        assert!(c.diagnostics.objective <= c.diagnostics.zero_objective);
    }
}

#[test]
fn config_validation() {
    let bad = [
        FitConfig { max_rank: 0, ..FitConfig::default() },
        FitConfig { convergence_tol: 0.0, ..FitConfig::default() },
        FitConfig { lambda_grid_size: 1, ..FitConfig::default() },
        FitConfig { inner_max_iters: 0, ..FitConfig::default() },
    ];
    for cfg in bad {
        assert!(matches!(cfg.validate(), Err(Error::InvalidArgument(_))));
    }
    let grid = FitConfig::default().lambda_grid(2.0);
    assert_eq!(grid.len(), 20);
    assert_eq!(grid[0], 2.0);
    assert!((grid[19] - 2e-3).abs() < 1e-15);
}

#[test]
fn rejects_empty_and_mismatched_inputs() {
    let cfg = FitConfig::default();
    assert!(matches!(fit_unit_rank(&[], &[], &cfg), Err(Error::EmptyData)));
    let a = DenseTensor::new(vec![2], vec![1.0, 2.0]).unwrap();
    let b = DenseTensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
    assert!(matches!(
        fit_unit_rank(&[&a, &b], &[1.0, 2.0], &cfg),
        Err(Error::ShapeMismatch { .. })
    ));
}

