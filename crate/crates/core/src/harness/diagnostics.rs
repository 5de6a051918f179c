use crate::error::{invalid, Result};
use crate::harness::EvaluatedSample;
use crate::head::TaskLayout;
use crate::otd::OtdDecision;

/// Where wrongly predicted task-1 samples land, bucketed by the task owning
/// the predicted class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BiasHistogram {
    /// `counts[j]` is the count for task `j + 1`.
    pub counts: Vec<usize>,
}

impl BiasHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Share of the wrong predictions falling in the last task's range.
    pub fn last_task_share(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| *self.counts.last().unwrap_or(&0) as f64 / total as f64)
    }
}

/// Histogram over the task-1 samples in `samples` evaluated at stage `t`.
pub fn bias_histogram(
    samples: &[EvaluatedSample],
    layout: &TaskLayout,
    t: usize,
) -> Result<BiasHistogram> {
    if t == 0 || t > layout.num_tasks() {
        return Err(invalid("stage", format!("{t} outside 1..={}", layout.num_tasks())));
    }
    let mut counts = vec![0; t];
    for s in samples.iter().filter(|s| s.task == 1 && !s.is_correct()) {
        let owner = layout.task_of(s.record.final_class);
        if owner > t {
            return Err(invalid(
                "prediction",
                format!("class {} not visible at stage {t}", s.record.final_class),
            ));
        }
        counts[owner - 1] += 1;
    }
    Ok(BiasHistogram { counts })
}

/// How often each detection branch fires and how often it is right.
#[derive(Debug, Clone, PartialEq)]
pub struct OtdValidationReport {
    pub total: usize,
    pub past_correct_flagged: usize,
    /// Flagged samples that are truly past-task and correctly predicted.
    pub past_correct_hits: usize,
    pub past_misclassified_flagged: usize,
    /// Flagged samples that are truly past-task.
    pub past_misclassified_hits: usize,
    pub assumption1_precision: Option<f64>,
    pub assumption2_precision: Option<f64>,
    pub assumption1_rate: f64,
    pub assumption2_rate: f64,
}

/// Scores detection against ground-truth task identity at stage `t`.
/// Precision is `None` when nothing was flagged.
pub fn otd_validation(samples: &[EvaluatedSample], t: usize) -> OtdValidationReport {
    let mut report = OtdValidationReport {
        total: samples.len(),
        past_correct_flagged: 0,
        past_correct_hits: 0,
        past_misclassified_flagged: 0,
        past_misclassified_hits: 0,
        assumption1_precision: None,
        assumption2_precision: None,
        assumption1_rate: 0.0,
        assumption2_rate: 0.0,
    };
    for s in samples {
        let past = s.task < t;
        match s.record.decision {
            OtdDecision::PastCorrect => {
                report.past_correct_flagged += 1;
                if past && s.record.initial_class == s.label {
                    report.past_correct_hits += 1;
                }
            }
            OtdDecision::PastMisclassified => {
                report.past_misclassified_flagged += 1;
                if past {
                    report.past_misclassified_hits += 1;
                }
            }
            OtdDecision::Passthrough => {}
        }
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    report.assumption1_precision = ratio(report.past_correct_hits, report.past_correct_flagged);
    report.assumption2_precision = ratio(
        report.past_misclassified_hits,
        report.past_misclassified_flagged,
    );
    report.assumption1_rate = ratio(report.past_correct_flagged, report.total).unwrap_or(0.0);
    report.assumption2_rate =
        ratio(report.past_misclassified_flagged, report.total).unwrap_or(0.0);
    report
}
