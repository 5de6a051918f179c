//! Sequential continual training with staged evaluation, with and without ARC.

mod ablation;
mod diagnostics;
mod metrics;
mod probe;

pub use ablation::{ablation_grid, AblationResult, Variant, VariantGrid};
pub use diagnostics::{bias_histogram, otd_validation, BiasHistogram, OtdValidationReport};
pub use metrics::{average_accuracy, forgetting, RMatrix};
pub use probe::{linear_probe_experiment, probe_with_heads, ProbeRow};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::arc::{arc_evaluate, ArcConfig, PredictionRecord};
use crate::data::{LabeledExample, TaskStream};
use crate::error::{Error, Result};
use crate::head::LinearHead;
use crate::rng::{substream, Domain};
use crate::train::{fit_task_in_place, TrainConfig};

/// A test sample's ground truth together with what the pipeline did with it.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatedSample {
    pub task: usize,
    pub label: usize,
    pub record: PredictionRecord,
}

impl EvaluatedSample {
    pub fn is_correct(&self) -> bool {
        self.record.final_class == self.label
    }
}

/// Evaluation of every stage's head on the test sets seen so far.
#[derive(Debug, Clone)]
pub struct StreamEvaluation {
    pub r: RMatrix,
    /// Per stage, samples in arrival order.
    pub stages: Vec<Vec<EvaluatedSample>>,
    pub updates: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub average_accuracy: f64,
    /// Absent for single-task streams.
    pub forgetting: Option<f64>,
    /// Mean accuracy over tasks seen so far, one entry per stage.
    pub stage_accuracy: Vec<f64>,
    pub seed: u64,
    pub train: TrainConfig,
    pub arc: ArcConfig,
}

impl MetricsReport {
    pub fn from_r(r: &RMatrix, train: &TrainConfig, arc: &ArcConfig) -> Result<Self> {
        let stage_accuracy = r
            .rows()
            .iter()
            .map(|row| row.iter().sum::<f64>() / row.len() as f64)
            .collect();
        Ok(Self {
            average_accuracy: average_accuracy(r)?,
            forgetting: if r.stages() >= 2 {
                Some(forgetting(r)?)
            } else {
                None
            },
            stage_accuracy,
            seed: train.seed,
            train: train.clone(),
            arc: arc.clone(),
        })
    }
}

/// Everything produced by one seeded pass over a stream.
#[derive(Debug, Clone)]
pub struct StreamRun {
    /// Head after `fit_task` at each stage.
    pub heads: Vec<LinearHead>,
    pub baseline: StreamEvaluation,
    pub arc: StreamEvaluation,
    pub baseline_report: MetricsReport,
    pub arc_report: MetricsReport,
}

impl StreamRun {
    pub fn final_stage(&self) -> usize {
        self.heads.len()
    }
}

/// Keeps up to `capacity` examples per class by reservoir sampling.
struct ReplayBuffer {
    capacity: usize,
    seed: u64,
    slots: Vec<Vec<LabeledExample>>,
}

impl ReplayBuffer {
    fn new(capacity: usize, seed: u64, classes: usize) -> Self {
        Self {
            capacity,
            seed,
            slots: vec![Vec::new(); classes],
        }
    }

    fn absorb(&mut self, examples: &[LabeledExample]) {
        if self.capacity == 0 {
            return;
        }
        let mut seen = vec![0usize; self.slots.len()];
        for ex in examples {
            let slot = &mut self.slots[ex.label];
            let n = seen[ex.label];
            seen[ex.label] += 1;
            if slot.len() < self.capacity {
                slot.push(ex.clone());
            } else {
                let mut rng = substream(self.seed, Domain::Replay, &[ex.label as u64, n as u64]);
                let j = rng.random_range(0..=n);
                if j < self.capacity {
                    slot[j] = ex.clone();
                }
            }
        }
    }

    fn examples(&self) -> impl Iterator<Item = &LabeledExample> {
        self.slots.iter().flatten()
    }
}

/// Trains the shared head task by task and returns the head after each stage.
pub fn train_stages(stream: &TaskStream, cfg: &TrainConfig) -> Result<Vec<LinearHead>> {
    cfg.validate()?;
    let layout = stream.layout();
    let mut head = LinearHead::new(stream.dim(), layout.step())?;
    let mut replay = ReplayBuffer::new(cfg.replay_per_class, cfg.seed, layout.total_classes());
    let mut heads = Vec::with_capacity(stream.num_tasks());
    for t in 1..=stream.num_tasks() {
        if t > 1 {
            head.expand(layout)?;
        }
        let task = stream.task(t);
        if task.train.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if cfg.replay_per_class > 0 && t > 1 {
            let mut data: Vec<LabeledExample> = task.train.clone();
            data.extend(replay.examples().cloned());
            fit_task_in_place(&mut head, &data, cfg)?;
        } else {
            fit_task_in_place(&mut head, &task.train, cfg)?;
        }
        replay.absorb(&task.train);
        heads.push(head.clone());
    }
    Ok(heads)
}

/// Test sets `T_1..T_t` concatenated and shuffled with the stage seed.
pub fn stage_test_order(stream: &TaskStream, t: usize, seed: u64) -> Vec<&LabeledExample> {
    let mut samples: Vec<&LabeledExample> =
        (1..=t).flat_map(|i| stream.task(i).test.iter()).collect();
    let mut rng = substream(seed, Domain::TestOrder, &[t as u64]);
    samples.shuffle(&mut rng);
    samples
}

/// Evaluates each stage head on a copy, so evaluation-time updates never reach
/// the next stage.
pub fn evaluate_stages(
    stream: &TaskStream,
    heads: &[LinearHead],
    seed: u64,
    cfg: &ArcConfig,
) -> Result<StreamEvaluation> {
    let num_tasks = stream.num_tasks();
    let step = stream.layout().step();
    let mut r = RMatrix::new();
    let mut stages = Vec::with_capacity(heads.len());
    let mut updates = 0;
    let mut warnings = Vec::new();
    for (idx, head) in heads.iter().enumerate() {
        let t = idx + 1;
        let order = stage_test_order(stream, t, seed);
        if order.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let batches: Vec<Vec<&[f64]>> = order
            .chunks(cfg.batch_size)
            .map(|c| c.iter().map(|ex| ex.feature.as_slice()).collect())
            .collect();
        let eval = arc_evaluate(head, &batches, t, step, &cfg.for_stage(t, num_tasks))?;
        updates += eval.updates;
        warnings.extend(eval.warnings);

        let samples: Vec<EvaluatedSample> = order
            .iter()
            .zip(eval.records)
            .map(|(ex, record)| EvaluatedSample {
                task: ex.task,
                label: ex.label,
                record,
            })
            .collect();
        let mut correct = vec![0usize; t];
        let mut total = vec![0usize; t];
        for s in &samples {
            total[s.task - 1] += 1;
            correct[s.task - 1] += usize::from(s.is_correct());
        }
        let mut row = Vec::with_capacity(t);
        for (i, (&c, &n)) in correct.iter().zip(&total).enumerate() {
            if n == 0 {
                return Err(crate::error::invalid(
                    "stream",
                    format!("task {} has no test examples", i + 1),
                ));
            }
            row.push(c as f64 / n as f64);
        }
        r.push_row(row)?;
        stages.push(samples);
    }
    Ok(StreamEvaluation {
        r,
        stages,
        updates,
        warnings,
    })
}

/// Trains over the stream and evaluates every stage twice: plain argmax and ARC.
pub fn run_stream(
    stream: &TaskStream,
    train_cfg: &TrainConfig,
    arc_cfg: &ArcConfig,
) -> Result<StreamRun> {
    arc_cfg.validate()?;
    let heads = train_stages(stream, train_cfg)?;
    run_with_heads(stream, heads, train_cfg, arc_cfg)
}

pub(crate) fn run_with_heads(
    stream: &TaskStream,
    heads: Vec<LinearHead>,
    train_cfg: &TrainConfig,
    arc_cfg: &ArcConfig,
) -> Result<StreamRun> {
    let plain = ArcConfig {
        retention_enabled: false,
        correction_enabled: false,
        ..arc_cfg.clone()
    };
    let baseline = evaluate_stages(stream, &heads, train_cfg.seed, &plain)?;
    let arc = evaluate_stages(stream, &heads, train_cfg.seed, arc_cfg)?;
    let baseline_report = MetricsReport::from_r(&baseline.r, train_cfg, &plain)?;
    let arc_report = MetricsReport::from_r(&arc.r, train_cfg, arc_cfg)?;
    Ok(StreamRun {
        heads,
        baseline,
        arc,
        baseline_report,
        arc_report,
    })
}
