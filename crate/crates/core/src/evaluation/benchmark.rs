use std::io::Write;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::analysis::{roi_ranking, RoiRank};
use super::methods::{fit_method, modality_mode, FittedModel, Hyperparams, Method};
use super::metrics::{mean_std, rmse};
use super::protocol::{split_indices, ProtocolConfig};
use super::tuning::tune;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::Modality;
use crate::seed::derive_seed;

/// One dataset to benchmark on, labelled for the report.
#[derive(Debug, Clone)]
pub struct BenchmarkInput {
    pub dataset: Dataset,
    pub representation: String,
    pub score: String,
}

/// Which stage touched which subjects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Tuning,
    Refit,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessEvent {
    pub trial: usize,
    pub method: Method,
    pub representation: String,
    pub score: String,
    pub phase: Phase,
    pub ids: Vec<String>,
}

/// Records every subject set handed to tuning, refitting and testing.
#[derive(Debug, Default)]
pub struct AccessLog(Mutex<Vec<AccessEvent>>);

impl AccessLog {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&self, e: AccessEvent) {
        self.0.lock().expect("access log poisoned").push(e);
    }

    pub fn events(&self) -> Vec<AccessEvent> {
        self.0.lock().expect("access log poisoned").clone()
    }
}

/// Result of one method on one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub method: Method,
    pub representation: String,
    pub score: String,
    pub rmse: f64,
    pub sparsity: f64,
    pub hyperparams: Hyperparams,
    /// Mean validation RMSE of the chosen hyperparameters.
    pub cv_rmse: f64,
}

/// Mean ± sample standard deviation over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: Method,
    pub representation: String,
    pub score: String,
    pub n_trials: usize,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub sparsity_mean: f64,
    pub sparsity_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiRankingEntry {
    pub method: Method,
    pub representation: String,
    pub score: String,
    pub rois: Vec<RoiRank>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityRankingEntry {
    pub representation: String,
    pub score: String,
    /// Mean over trials of the per-model modality contribution, largest
    /// first.
    pub ranking: Vec<(Modality, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: Vec<TrialRecord>,
    pub aggregates: Vec<Aggregate>,
    pub roi_ranking: Vec<RoiRankingEntry>,
    pub modality_ranking: Vec<ModalityRankingEntry>,
}

/// Header of [`EvalReport::write_csv`].
pub const REPORT_CSV_HEADER: [&str; 8] = [
    "trial",
    "method",
    "representation",
    "score",
    "rmse",
    "sparsity",
    "hyperparams",
    "cv_rmse",
];

/// Header of [`EvalReport::write_summary_csv`].
pub const SUMMARY_CSV_HEADER: [&str; 8] = [
    "method",
    "representation",
    "score",
    "n_trials",
    "rmse_mean",
    "rmse_std",
    "sparsity_mean",
    "sparsity_std",
];

/// Group records by (method, representation, score) in first-seen order.
pub fn aggregate(records: &[TrialRecord]) -> Vec<Aggregate> {
    let mut keys: Vec<(Method, &str, &str)> = Vec::new();
    for r in records {
        let k = (r.method, r.representation.as_str(), r.score.as_str());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(method, rep, score)| {
            let mut group: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.method == method && r.representation == rep && r.score == score)
                .collect();
            group.sort_by_key(|r| r.trial);
            let rm: Vec<f64> = group.iter().map(|r| r.rmse).collect();
            let sp: Vec<f64> = group.iter().map(|r| r.sparsity).collect();
            let (rmse_mean, rmse_std) = mean_std(&rm);
            let (sparsity_mean, sparsity_std) = mean_std(&sp);
            Aggregate {
                method,
                representation: rep.to_string(),
                score: score.to_string(),
                n_trials: group.len(),
                rmse_mean,
                rmse_std,
                sparsity_mean,
                sparsity_std,
            }
        })
        .collect()
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// One row per trial × method × representation × score.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(REPORT_CSV_HEADER)?;
        for r in &self.records {
            out.write_record([
                r.trial.to_string(),
                r.method.to_string(),
                r.representation.clone(),
                r.score.clone(),
                r.rmse.to_string(),
                r.sparsity.to_string(),
                r.hyperparams.describe(),
                r.cv_rmse.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// One row per method × representation × score.
    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(SUMMARY_CSV_HEADER)?;
        for a in &self.aggregates {
            out.write_record([
                a.method.to_string(),
                a.representation.clone(),
                a.score.clone(),
                a.n_trials.to_string(),
                a.rmse_mean.to_string(),
                a.rmse_std.to_string(),
                a.sparsity_mean.to_string(),
                a.sparsity_std.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Output of a benchmark run together with the refitted models, indexed
/// like `report.records`.
#[derive(Debug, Clone)]
pub struct BenchmarkRun {
    pub report: EvalReport,
    pub models: Vec<FittedModel>,
}

/// Run the protocol on every input: per trial, split, tune each method by
/// cross-validation on the training part, refit on all of it and score the
/// test part.
pub fn run_benchmark(inputs: &[BenchmarkInput], methods: &[Method], cfg: &ProtocolConfig) -> Result<EvalReport> {
    run_benchmark_logged(inputs, methods, cfg, None).map(|r| r.report)
}

/// [`run_benchmark`] that also returns the models and can record data
/// access.
pub fn run_benchmark_logged(
    inputs: &[BenchmarkInput],
    methods: &[Method],
    cfg: &ProtocolConfig,
    log: Option<&AccessLog>,
) -> Result<BenchmarkRun> {
    cfg.validate()?;
    if inputs.is_empty() || methods.is_empty() {
        return Err(Error::InvalidArgument("benchmark needs at least one input and one method".into()));
    }
    let mut jobs = Vec::new();
    for (d, _) in inputs.iter().enumerate() {
        for trial in 0..cfg.n_trials {
            for &m in methods {
                jobs.push((d, trial, m));
            }
        }
    }
    let results: Vec<(TrialRecord, FittedModel)> = jobs
        .par_iter()
        .map(|&(d, trial, method)| run_one(&inputs[d], trial, method, cfg, log))
        .collect::<Result<_>>()?;
    let (records, models): (Vec<TrialRecord>, Vec<FittedModel>) = results.into_iter().unzip();

    let mut roi = Vec::new();
    let mut modality = Vec::new();
    for input in inputs {
        for &method in methods {
            let picked: Vec<&FittedModel> = records
                .iter()
                .zip(&models)
                .filter(|(r, _)| r.method == method && r.representation == input.representation && r.score == input.score)
                .map(|(_, m)| m)
                .collect();
            let coefs = picked
                .iter()
                .map(|m| m.coefficient_tensor())
                .collect::<Result<Vec<_>>>()?;
            roi.push(RoiRankingEntry {
                method,
                representation: input.representation.clone(),
                score: input.score.clone(),
                rois: roi_ranking(&coefs, cfg.top_n, cfg.zero_tol)?,
            });
            if method == Method::Proposed {
                if let Some(mm) = modality_mode(input.dataset.shape()) {
                    modality.push(ModalityRankingEntry {
                        representation: input.representation.clone(),
                        score: input.score.clone(),
                        ranking: mean_modality_ranking(&picked, mm)?,
                    });
                }
            }
        }
    }
    Ok(BenchmarkRun {
        report: EvalReport {
            aggregates: aggregate(&records),
            records,
            roi_ranking: roi,
            modality_ranking: modality,
        },
        models,
    })
}

fn mean_modality_ranking(models: &[&FittedModel], mode: usize) -> Result<Vec<(Modality, f64)>> {
    let mut sums = [0.0; 3];
    for m in models {
        if let FittedModel::Proposed(r) = m {
            for (modality, v) in r.modality_contribution(mode)? {
                sums[modality as usize] += v;
            }
        }
    }
    let n = models.len().max(1) as f64;
    let mut out: Vec<(Modality, f64)> = Modality::ALL.iter().map(|&m| (m, sums[m as usize] / n)).collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(out)
}

fn run_one(
    input: &BenchmarkInput,
    trial: usize,
    method: Method,
    cfg: &ProtocolConfig,
    log: Option<&AccessLog>,
) -> Result<(TrialRecord, FittedModel)> {
    let ds = &input.dataset;
    let (train_idx, test_idx) = split_indices(ds.responses(), cfg, trial)?;
    let train = ds.subset(&train_idx)?;
    let event = |phase: Phase, part: &Dataset| {
        if let Some(log) = log {
            log.push(AccessEvent {
                trial,
                method,
                representation: input.representation.clone(),
                score: input.score.clone(),
                phase,
                ids: part.ids().to_vec(),
            });
        }
    };
    let trial_seed = derive_seed(cfg.seed, &[trial as u64, method as u64]);
    event(Phase::Tuning, &train);
    let cv = tune(&train, method, cfg, derive_seed(trial_seed, &[0]))?;
    event(Phase::Refit, &train);
    let model = fit_method(&train, &cv.best, &cfg.fit, &cfg.baseline, derive_seed(trial_seed, &[1]))?;
    let test = ds.subset(&test_idx)?;
    event(Phase::Test, &test);
    let pred = model.predict_all(&test)?;
    let record = TrialRecord {
        trial,
        method,
        representation: input.representation.clone(),
        score: input.score.clone(),
        rmse: rmse(test.responses(), &pred)?,
        sparsity: model.sparsity(cfg.zero_tol),
        hyperparams: cv.best,
        cv_rmse: cv.best_rmse,
    };
    Ok((record, model))
}
