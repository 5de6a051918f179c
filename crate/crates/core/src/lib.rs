//! Test-time classifier de-biasing for class-incremental linear heads.
//!
//! A linear head is trained task by task over frozen feature vectors and
//! inherits a bias toward the most recent task's classes. At evaluation the
//! [`arc`] pipeline detects past-task samples from the head's own confidence
//! ([`otd`]), rebalances the head with one gradient step on confidently
//! predicted past-task samples, and relabels suspected misclassifications
//! with task-based softmax scores. The [`harness`] drives full experiments
//! over a [`data::TaskStream`]: accuracy matrices, average accuracy and
//! forgetting, bias histograms, linear probes, detection precision and
//! ablation grids.

pub mod arc;
pub mod data;
pub mod error;
pub mod harness;
pub mod head;
pub mod loss;
pub mod otd;
pub mod rng;
pub mod train;

pub use arc::{
    adaptive_correction, adaptive_retention, arc_evaluate, tss, ArcConfig, ArcEvaluation,
    PredictionRecord, RetentionOutcome, TssScores,
};
pub use data::{
    generate_synthetic, load_embeddings, write_embeddings, LabeledExample, SyntheticSpec,
    TaskData, TaskStream,
};
pub use error::{Error, Result};
pub use harness::{
    ablation_grid, average_accuracy, bias_histogram, forgetting, linear_probe_experiment,
    otd_validation, run_stream, BiasHistogram, EvaluatedSample, MetricsReport,
    OtdValidationReport, ProbeRow, RMatrix, StreamRun, Variant, VariantGrid,
};
pub use head::{HeadGradient, LinearHead, TaskLayout};
pub use loss::{cross_entropy, entropy, loss_gradient, retention_gradient, softmax, LossMode};
pub use otd::{
    classify_sample, classify_sample_with, confidence, masked_confidence, ConfidenceReport,
    OtdDecision, Thresholds, WMode,
};
pub use train::{fit_task, TrainConfig};
