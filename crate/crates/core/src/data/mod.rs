//! Cohort ingestion, clinical score normalization and synthetic cohorts.

mod aal;
mod cohort;
mod dump;
mod scores;
mod synthetic;

pub use aal::{aal116_labels, feature_column, roi_index};
pub use cohort::{load_cohort, read_cohort, write_cohort, CohortTable};
pub use dump::{DumpSubject, TensorDump};
pub use scores::{normalize_scores, NormalizedScores, RawScores, Score};
pub use synthetic::{
    generate_graph_cohort, generate_synthetic, AffineMap, GraphSynthConfig, SynthConfig,
    SyntheticCohort, SyntheticData,
};
