//! Sequential supervised training of the shared head.

use rand::seq::SliceRandom;

use crate::data::LabeledExample;
use crate::error::{invalid, Error, Result};
use crate::head::{HeadGradient, LinearHead};
use crate::loss::{argmax, logit_gradient, LossMode};
use crate::rng::{substream, Domain};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Exemplars kept per past class for replay; 0 is memory-free.
    pub replay_per_class: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            lr: 1.0,
            batch_size: 16,
            replay_per_class: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(invalid("train.lr", "must be finite and positive"));
        }
        if self.batch_size == 0 {
            return Err(invalid("train.batch_size", "must be at least 1"));
        }
        Ok(())
    }
}

/// Mini-batch SGD on the cross-entropy over every visible class, starting
/// from `head`. Sample order is reshuffled each epoch from `cfg.seed`.
pub fn fit_task(
    head: &LinearHead,
    examples: &[LabeledExample],
    cfg: &TrainConfig,
) -> Result<LinearHead> {
    let mut head = head.clone();
    fit_task_in_place(&mut head, examples, cfg)?;
    Ok(head)
}

pub fn fit_task_in_place(
    head: &mut LinearHead,
    examples: &[LabeledExample],
    cfg: &TrainConfig,
) -> Result<()> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for ex in examples {
        head.check_input(&ex.feature)?;
        if ex.label >= head.classes() {
            return Err(Error::LabelOutOfRange {
                label: ex.label,
                classes: head.classes(),
            });
        }
    }

    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut grad = HeadGradient::zeros(head.classes(), head.dim());
    for epoch in 0..cfg.epochs {
        let mut rng = substream(
            cfg.seed,
            Domain::TrainShuffle,
            &[head.visible_tasks() as u64, epoch as u64],
        );
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.weights.fill(0.0);
            grad.bias.fill(0.0);
            for &i in batch {
                let ex = &examples[i];
                let z = head.forward_unchecked(&ex.feature);
                let (dz, _) = logit_gradient(&z, ex.label, LossMode::CrossEntropy);
                grad.accumulate(&dz, &ex.feature);
            }
            grad.scale(1.0 / batch.len() as f64);
            head.apply_sgd(&grad, cfg.lr)?;
        }
    }
    Ok(())
}

/// Plain argmax predictions.
pub fn predict(head: &LinearHead, x: &[f64]) -> Result<usize> {
    let z = head.forward(x)?;
    argmax(&z).ok_or(Error::EmptyLogits)
}

/// Fraction of `examples` whose argmax prediction equals the label.
pub fn accuracy(head: &LinearHead, examples: &[LabeledExample]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut correct = 0usize;
    for ex in examples {
        if predict(head, &ex.feature)? == ex.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / examples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn two_blobs(seed: u64, per_class: usize) -> Vec<LabeledExample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let centers = [[2.0, 2.0], [-2.0, -2.0]];
        let mut out = Vec::new();
        for (label, c) in centers.iter().enumerate() {
            for _ in 0..per_class {
                out.push(LabeledExample {
                    feature: vec![c[0] + noise.sample(&mut rng), c[1] + noise.sample(&mut rng)],
                    label,
                    task: 1,
                });
            }
        }
        out
    }

    fn toy_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 20,
            lr: 0.1,
            batch_size: 10,
            replay_per_class: 0,
            seed: 3,
        }
    }

    #[test]
    fn separable_toy_is_learned() {
        let data = two_blobs(3, 50);
        let head = fit_task(&LinearHead::new(2, 2).unwrap(), &data, &toy_cfg()).unwrap();
        assert!(accuracy(&head, &data).unwrap() >= 0.99);
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let data = two_blobs(3, 5);
        let start = LinearHead::new(2, 2).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..toy_cfg()
        };
        assert_eq!(fit_task(&start, &data, &cfg).unwrap(), start);
    }

    #[test]
    fn training_is_deterministic() {
        let data = two_blobs(9, 30);
        let start = LinearHead::new(2, 2).unwrap();
        let a = fit_task(&start, &data, &toy_cfg()).unwrap();
        let b = fit_task(&start, &data, &toy_cfg()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_empty_and_out_of_range() {
        let start = LinearHead::new(2, 2).unwrap();
        assert!(matches!(
            fit_task(&start, &[], &toy_cfg()),
            Err(Error::EmptyDataset)
        ));
        let bad = vec![LabeledExample {
            feature: vec![0.0, 0.0],
            label: 2,
            task: 2,
        }];
        assert!(matches!(
            fit_task(&start, &bad, &toy_cfg()),
            Err(Error::LabelOutOfRange { .. })
        ));
    }
}
