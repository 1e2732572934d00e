//! Experimental protocol: train/test splits, k-fold tuning over
//! per-method grids, repeated trials, metrics, ROI rankings and
//! hyperparameter sweeps.

mod analysis;
mod benchmark;
mod methods;
mod metrics;
mod protocol;
mod tuning;

pub use analysis::{roi_modes, roi_ranking, sweep_k, sweep_rank, write_curve_csv, CurvePoint, RoiRank};
pub use benchmark::{
    aggregate, run_benchmark, run_benchmark_logged, AccessEvent, AccessLog, Aggregate, BenchmarkInput, BenchmarkRun,
    EvalReport, ModalityRankingEntry, Phase, RoiRankingEntry, TrialRecord, REPORT_CSV_HEADER, SUMMARY_CSV_HEADER,
};
pub use methods::{fit_method, group_mode, modality_mode, tenths, FittedModel, Hyperparams, Method, MethodGrids};
pub use metrics::{mean_std, rmse};
pub use protocol::{fold_indices, split, split_indices, ProtocolConfig};
pub use tuning::{cross_validate, tune, CvResult};
