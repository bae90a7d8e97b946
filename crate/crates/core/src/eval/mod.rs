//! Test-set metrics, the plausibility classifier, and the mark-intensity sweep.

mod metrics;
mod semantic;
mod sweep;

pub use metrics::{evaluate, MetricsReport, SampleRecord, TOPK_LEVELS};
pub use semantic::{
    make_semantic_dataset, semantic_score, train_semantic, NegativeKind, SemanticClassifier, SemanticExample,
    DECISION_THRESHOLD, PERTURB_SIGMA, SHIFT_RANGE,
};
pub use sweep::{expected_distance, intensity_sweep, scale_marks, spearman, sweep_to_csv, MarkRegion, SweepPoint};
