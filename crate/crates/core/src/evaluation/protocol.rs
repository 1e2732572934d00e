use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::methods::MethodGrids;
use crate::baselines::BaselineOptions;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::regression::{FitConfig, DEFAULT_ZERO_TOL};
use crate::seed::rng_for;

/// Split, tuning and trial settings of a benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    /// Share of subjects held out for testing.
    pub test_fraction: f64,
    pub cv_folds: usize,
    pub n_trials: usize,
    pub seed: u64,
    /// Draw a fresh train/test split in every trial; otherwise all trials
    /// reuse the trial-0 split and differ only in model seeds.
    pub resplit_per_trial: bool,
    /// Keep the share of each distinct response value equal across train
    /// and test.
    pub stratify: bool,
    /// Magnitude at or below which a coefficient counts as zero.
    pub zero_tol: f64,
    /// Number of ROIs listed in report rankings.
    pub top_n: usize,
    pub grids: MethodGrids,
    /// Base settings of the proposed model; `max_rank` and `seed` are set by
    /// the protocol.
    pub fit: FitConfig,
    pub baseline: BaselineOptions,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            test_fraction: 1.0 / 6.0,
            cv_folds: 5,
            n_trials: 5,
            seed: 0,
            resplit_per_trial: true,
            stratify: false,
            zero_tol: DEFAULT_ZERO_TOL,
            top_n: 10,
            grids: MethodGrids::default(),
            fit: FitConfig::default(),
            baseline: BaselineOptions::default(),
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        if self.cv_folds < 2 {
            return Err(Error::InvalidArgument("cv_folds must be at least 2".into()));
        }
        if self.n_trials == 0 {
            return Err(Error::InvalidArgument("n_trials must be at least 1".into()));
        }
        if !(self.zero_tol >= 0.0) {
            return Err(Error::InvalidArgument("zero_tol must be nonnegative".into()));
        }
        self.fit.validate()?;
        self.grids.validate()
    }

    pub fn test_size(&self, n: usize) -> usize {
        (n as f64 * self.test_fraction).round() as usize
    }
}

/// Train and test indices of trial `trial`.
pub fn split_indices(responses: &[f64], cfg: &ProtocolConfig, trial: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    cfg.validate()?;
    let n = responses.len();
    let n_test = cfg.test_size(n);
    if n_test == 0 || n - n_test < cfg.cv_folds {
        return Err(Error::InvalidArgument(format!(
            "{n} subjects are too few for a {:.4} test share and {}-fold tuning",
            cfg.test_fraction, cfg.cv_folds
        )));
    }
    let key = if cfg.resplit_per_trial { trial as u64 } else { 0 };
    let mut rng = rng_for(cfg.seed, &[key, 0]);
    let mut test = if cfg.stratify {
        let mut strata: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (i, y) in responses.iter().enumerate() {
            strata.entry(y.to_bits()).or_default().push(i);
        }
        let mut groups: Vec<Vec<usize>> = strata.into_values().collect();
        // Largest-remainder allocation of the test quota over strata.
        let quotas: Vec<f64> = groups
            .iter()
            .map(|g| g.len() as f64 * n_test as f64 / n as f64)
            .collect();
        let mut take: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let mut order: Vec<usize> = (0..groups.len()).collect();
        order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())));
        let short = n_test - take.iter().sum::<usize>();
        for &g in order.iter().take(short) {
            take[g] += 1;
        }
        let mut out = Vec::with_capacity(n_test);
        for (g, t) in groups.iter_mut().zip(&take) {
            g.shuffle(&mut rng);
            out.extend_from_slice(&g[..*t]);
        }
        out
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        idx.truncate(n_test);
        idx
    };
    test.sort_unstable();
    let mut is_test = vec![false; n];
    test.iter().for_each(|&i| is_test[i] = true);
    let train = (0..n).filter(|&i| !is_test[i]).collect();
    Ok((train, test))
}

/// Train and test sets of trial `trial`.
pub fn split(ds: &Dataset, cfg: &ProtocolConfig, trial: usize) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(ds.responses(), cfg, trial)?;
    Ok((ds.subset(&train)?, ds.subset(&test)?))
}

/// Validation indices of `k` folds over `n` subjects, shuffled by `seed`.
/// Fold sizes differ by at most one.
pub fn fold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || n < k {
        return Err(Error::InvalidArgument(format!(
            "cannot form {k} folds from {n} subjects"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_for(seed, &[]));
    let mut folds = vec![Vec::new(); k];
    for (pos, i) in idx.into_iter().enumerate() {
        folds[pos % k].push(i);
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

/// Complement of a fold.
pub(crate) fn complement(n: usize, fold: &[usize]) -> Vec<usize> {
    let mut inside = vec![false; n];
    fold.iter().for_each(|&i| inside[i] = true);
    (0..n).filter(|&i| !inside[i]).collect()
}
