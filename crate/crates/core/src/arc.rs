//! Adaptive Retention & Correction at evaluation time.
//!
//! Test samples arrive in batches. Each batch is routed through out-of-task
//! detection with the head as it stood when the batch arrived:
//!
//! * confident past-task predictions feed a single mean-reduced gradient step
//!   on the head (cross-entropy against the prediction plus entropy), after
//!   which those samples are re-predicted;
//! * low-ratio current-task predictions are relabelled through task-based
//!   softmax scores, which compare each task's classes against only the
//!   classes that existed when that task was introduced;
//! * everything else keeps its argmax.

use crate::error::{invalid, Error, Result};
use crate::head::LinearHead;
use crate::loss::{argmax, logit_gradient, softmax_unchecked, LossMode};
use crate::otd::{classify_sample_with, OtdDecision, Thresholds, WMode};

#[derive(Debug, Clone, PartialEq)]
pub struct ArcConfig {
    pub thresholds: Thresholds,
    /// TSS temperature; must exceed 1 while correction uses it.
    pub temperature: f64,
    /// When false, TSS runs at temperature 1 (ablation).
    pub use_temperature: bool,
    /// Retention learning rate.
    pub lr: f64,
    pub retention_enabled: bool,
    pub correction_enabled: bool,
    pub batch_size: usize,
    /// Only run ARC after the final training task.
    pub arc_last: bool,
    pub loss: LossMode,
    pub w_mode: WMode,
}

impl Default for ArcConfig {
    fn default() -> Self {
        Self {
            thresholds: Thresholds::default(),
            temperature: 2.0,
            use_temperature: true,
            lr: 0.01,
            retention_enabled: true,
            correction_enabled: true,
            batch_size: 64,
            arc_last: false,
            loss: LossMode::Both,
            w_mode: WMode::Ratio,
        }
    }
}

impl ArcConfig {
    /// Plain argmax evaluation: both mechanisms off.
    pub fn disabled() -> Self {
        Self {
            retention_enabled: false,
            correction_enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        Thresholds::new(self.thresholds.beta, self.thresholds.gamma)?;
        if !self.temperature.is_finite() || self.temperature < 1.0 {
            return Err(invalid("arc.temperature", "must be finite and at least 1"));
        }
        if self.correction_enabled && self.use_temperature && self.temperature <= 1.0 {
            return Err(invalid(
                "arc.temperature",
                "must exceed 1 when correction uses it",
            ));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(invalid("arc.lr", "must be finite and positive"));
        }
        if self.batch_size == 0 {
            return Err(invalid("arc.batch_size", "must be at least 1"));
        }
        Ok(())
    }

    pub fn effective_temperature(&self) -> f64 {
        if self.use_temperature {
            self.temperature
        } else {
            1.0
        }
    }

    /// Configuration actually used at stage `t` of `num_tasks`; with
    /// `arc_last` every stage but the final one evaluates plainly.
    pub fn for_stage(&self, t: usize, num_tasks: usize) -> Self {
        if self.arc_last && t < num_tasks {
            Self {
                retention_enabled: false,
                correction_enabled: false,
                ..self.clone()
            }
        } else {
            self.clone()
        }
    }
}

/// Task-based softmax scores `S_1..S_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TssScores(pub Vec<f64>);

impl TssScores {
    pub fn scores(&self) -> &[f64] {
        &self.0
    }

    /// 1-based task with the highest score, lowest task on ties.
    pub fn best_task(&self) -> usize {
        argmax(&self.0).expect("at least one task") + 1
    }
}

fn check_logits(z: &[f64], t: usize, s: usize) -> Result<()> {
    if t == 0 || s == 0 {
        return Err(invalid("task/step", "must be at least 1"));
    }
    if z.len() != s * t {
        return Err(Error::DimensionMismatch {
            expected: s * t,
            found: z.len(),
        });
    }
    if !z.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    Ok(())
}

/// For each task `i ≤ t`: scale the prefix `z[..s·i]` by `1/T^(t−i)`, take
/// its softmax and keep the largest probability among task `i`'s classes.
pub fn tss(z: &[f64], t: usize, s: usize, temperature: f64) -> Result<TssScores> {
    check_logits(z, t, s)?;
    if !temperature.is_finite() || temperature < 1.0 {
        return Err(invalid("temperature", "must be finite and at least 1"));
    }
    let scores = (1..=t)
        .map(|i| {
            let scale = temperature.powi((t - i) as i32);
            let prefix: Vec<f64> = z[..s * i].iter().map(|v| v / scale).collect();
            softmax_unchecked(&prefix)[s * (i - 1)..]
                .iter()
                .copied()
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(TssScores(scores))
}

/// Picks the task with the highest TSS and returns it (1-based) together with
/// the raw-logit argmax inside that task's class range.
pub fn adaptive_correction(
    z: &[f64],
    t: usize,
    s: usize,
    temperature: f64,
) -> Result<(usize, usize, TssScores)> {
    let scores = tss(z, t, s, temperature)?;
    let task = scores.best_task();
    let start = s * (task - 1);
    let class = start + argmax(&z[start..start + s]).expect("step >= 1");
    Ok((task, class, scores))
}

/// Result of one retention step.
#[derive(Debug, Clone)]
pub struct RetentionOutcome {
    pub head: LinearHead,
    /// Argmax of every batch element under the returned head.
    pub predictions: Vec<usize>,
    /// Mean objective over the batch before the step.
    pub loss: Option<f64>,
    pub applied: bool,
    pub warning: Option<String>,
}

/// One SGD step on the batch-mean retention objective, each sample supervised
/// by its pseudo-label, followed by re-prediction of the batch. Only the
/// head's weights and bias change.
pub fn adaptive_retention(
    head: &LinearHead,
    batch: &[(&[f64], usize)],
    cfg: &ArcConfig,
) -> Result<RetentionOutcome> {
    for (x, label) in batch {
        head.check_input(x)?;
        if *label >= head.classes() {
            return Err(Error::LabelOutOfRange {
                label: *label,
                classes: head.classes(),
            });
        }
    }
    if batch.is_empty() {
        return Ok(RetentionOutcome {
            head: head.clone(),
            predictions: Vec::new(),
            loss: None,
            applied: false,
            warning: None,
        });
    }

    let mut grad = crate::head::HeadGradient::zeros(head.classes(), head.dim());
    let mut total = 0.0;
    for (x, label) in batch {
        let z = head.forward_unchecked(x);
        let (dz, loss) = logit_gradient(&z, *label, cfg.loss);
        grad.accumulate(&dz, x);
        total += loss;
    }
    let n = batch.len() as f64;
    grad.scale(1.0 / n);
    let mean_loss = total / n;

    let mut updated = head.clone();
    let (applied, warning) = if !mean_loss.is_finite() {
        (false, Some(format!("non-finite retention loss {mean_loss}; step skipped")))
    } else {
        match updated.apply_sgd(&grad, cfg.lr) {
            Ok(()) => (true, None),
            Err(e) => (false, Some(format!("{e}; step skipped"))),
        }
    };

    let predictions = batch
        .iter()
        .map(|(x, _)| argmax(&updated.forward_unchecked(x)).expect("classes >= 1"))
        .collect();
    Ok(RetentionOutcome {
        head: updated,
        predictions,
        loss: Some(mean_loss),
        applied,
        warning,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub initial_class: usize,
    pub final_class: usize,
    pub decision: OtdDecision,
    pub tss: Option<TssScores>,
    /// Task chosen by correction, when correction ran.
    pub corrected_task: Option<usize>,
    pub retention_applied: bool,
}

#[derive(Debug, Clone)]
pub struct ArcEvaluation {
    /// One record per input sample, in arrival order.
    pub records: Vec<PredictionRecord>,
    pub head: LinearHead,
    /// Number of retention steps applied.
    pub updates: usize,
    pub warnings: Vec<String>,
}

/// Runs the online pipeline over `batches`, in order, starting from `head`
/// at task `t` with step `s`. Each sample is seen once.
pub fn arc_evaluate<B, F>(
    head: &LinearHead,
    batches: &[B],
    t: usize,
    s: usize,
    cfg: &ArcConfig,
) -> Result<ArcEvaluation>
where
    B: AsRef<[F]>,
    F: AsRef<[f64]>,
{
    cfg.validate()?;
    if head.visible_tasks() != t || head.step() != s {
        return Err(invalid("head", "visible tasks/step differ from the evaluation stage"));
    }
    for batch in batches {
        for x in batch.as_ref() {
            head.check_input(x.as_ref())?;
        }
    }

    let temperature = cfg.effective_temperature();
    let mut head = head.clone();
    let mut records = Vec::new();
    let mut updates = 0;
    let mut warnings = Vec::new();

    for batch in batches {
        let batch = batch.as_ref();
        let offset = records.len();
        let mut flagged: Vec<(usize, usize)> = Vec::new();
        for (i, x) in batch.iter().enumerate() {
            let z = head.forward_unchecked(x.as_ref());
            let (decision, report) =
                classify_sample_with(&z, t, s, &cfg.thresholds, cfg.w_mode)?;
            let mut record = PredictionRecord {
                initial_class: report.predicted_class,
                final_class: report.predicted_class,
                decision,
                tss: None,
                corrected_task: None,
                retention_applied: false,
            };
            match decision {
                OtdDecision::PastMisclassified if cfg.correction_enabled => {
                    let (task, class, scores) = adaptive_correction(&z, t, s, temperature)?;
                    record.final_class = class;
                    record.corrected_task = Some(task);
                    record.tss = Some(scores);
                }
                OtdDecision::PastCorrect if cfg.retention_enabled => {
                    flagged.push((i, report.predicted_class));
                }
                _ => {}
            }
            records.push(record);
        }

        if !flagged.is_empty() {
            let samples: Vec<(&[f64], usize)> = flagged
                .iter()
                .map(|&(i, label)| (batch[i].as_ref(), label))
                .collect();
            let outcome = adaptive_retention(&head, &samples, cfg)?;
            if outcome.applied {
                updates += 1;
            }
            warnings.extend(outcome.warning);
            for (&(i, _), &pred) in flagged.iter().zip(&outcome.predictions) {
                let record = &mut records[offset + i];
                record.final_class = pred;
                record.retention_applied = outcome.applied;
            }
            head = outcome.head;
        }
    }

    Ok(ArcEvaluation {
        records,
        head,
        updates,
        warnings,
    })
}
