use crate::data::{LabeledExample, TaskStream};
use crate::error::Result;
use crate::harness::train_stages;
use crate::head::LinearHead;
use crate::loss::argmax;
use crate::rng::{stream_id, Domain};
use crate::train::{fit_task_in_place, TrainConfig};

/// Accuracy on one past task's test set at one stage, by an independent
/// per-task head (task identity given) and by the shared head.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRow {
    pub stage: usize,
    pub task: usize,
    pub independent: f64,
    pub shared: f64,
}

fn local(examples: &[LabeledExample], offset: usize) -> Vec<LabeledExample> {
    examples
        .iter()
        .map(|ex| LabeledExample {
            feature: ex.feature.clone(),
            label: ex.label - offset,
            task: 1,
        })
        .collect()
}

fn hit_rate<'a>(
    examples: &'a [LabeledExample],
    predict: impl Fn(&'a LabeledExample) -> usize,
) -> f64 {
    let hits = examples.iter().filter(|ex| predict(ex) == ex.label).count();
    hits as f64 / examples.len().max(1) as f64
}

/// Trains the shared head over the stream, then probes it.
pub fn linear_probe_experiment(stream: &TaskStream, cfg: &TrainConfig) -> Result<Vec<ProbeRow>> {
    let heads = train_stages(stream, cfg)?;
    probe_with_heads(stream, &heads, cfg)
}

/// For every stage `t` and past task `i < t`: an `s`-class head trained on
/// task `i` alone with the same epoch budget, against the shared stage head.
pub fn probe_with_heads(
    stream: &TaskStream,
    heads: &[LinearHead],
    cfg: &TrainConfig,
) -> Result<Vec<ProbeRow>> {
    let layout = stream.layout();
    let step = layout.step();
    let past_tasks = heads.len().saturating_sub(1);

    // features are frozen, so each task's probe is the same at every stage
    let mut independent = Vec::with_capacity(past_tasks);
    for i in 1..=past_tasks {
        let offset = layout.task_range(i).start;
        let train = local(&stream.task(i).train, offset);
        let test = local(&stream.task(i).test, offset);
        let mut probe = LinearHead::new(stream.dim(), step)?;
        let probe_cfg = TrainConfig {
            seed: stream_id(Domain::Probe, &[cfg.seed, i as u64]),
            replay_per_class: 0,
            ..cfg.clone()
        };
        fit_task_in_place(&mut probe, &train, &probe_cfg)?;
        independent.push(hit_rate(&test, |ex| {
            argmax(&probe.forward_unchecked(&ex.feature)).expect("step >= 1")
        }));
    }

    let mut rows = Vec::new();
    for (idx, head) in heads.iter().enumerate() {
        let stage = idx + 1;
        for i in 1..stage {
            let shared = hit_rate(&stream.task(i).test, |ex| {
                argmax(&head.forward_unchecked(&ex.feature)).expect("classes >= 1")
            });
            rows.push(ProbeRow {
                stage,
                task: i,
                independent: independent[i - 1],
                shared,
            });
        }
    }
    Ok(rows)
}
