use rand_distr::{Distribution, StandardNormal};

use crate::data::{LabeledExample, TaskData, TaskStream};
use crate::error::{invalid, Result};
use crate::head::TaskLayout;
use crate::rng::{substream, Domain};

/// Class-conditional spherical Gaussian benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub num_tasks: usize,
    pub step: usize,
    pub dim: usize,
    /// Standard deviation of each class-mean coordinate.
    pub mean_scale: f64,
    /// Within-class standard deviation.
    pub noise_sigma: f64,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_tasks: 10,
            step: 10,
            dim: 64,
            mean_scale: 1.0,
            noise_sigma: 0.6,
            train_per_class: 100,
            test_per_class: 100,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        TaskLayout::new(self.num_tasks, self.step)?;
        if self.dim < 2 {
            return Err(invalid("dim", "must be at least 2"));
        }
        if !(self.mean_scale.is_finite() && self.mean_scale >= 0.0) {
            return Err(invalid("mean_scale", "must be finite and non-negative"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma > 0.0) {
            return Err(invalid("noise_sigma", "must be finite and positive"));
        }
        if self.train_per_class == 0 || self.test_per_class == 0 {
            return Err(invalid("per_class", "train and test counts must be at least 1"));
        }
        Ok(())
    }
}

/// Draws the stream described by `spec`.
///
/// Each class mean and each (class, split) sample block comes from its own
/// substream keyed by `(task, class, split)`. Features are rounded through
/// `f32` so the stream survives an EMB1 round trip bit for bit.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<TaskStream> {
    spec.validate()?;
    let layout = TaskLayout::new(spec.num_tasks, spec.step)?;
    let mut tasks = Vec::with_capacity(spec.num_tasks);
    for task in 1..=spec.num_tasks {
        let mut data = TaskData::default();
        for class in layout.task_range(task) {
            let coords = [task as u64, class as u64];
            let mut rng = substream(spec.seed, Domain::ClassMean, &coords);
            let mean: Vec<f64> = (0..spec.dim)
                .map(|_| {
                    let v: f64 = StandardNormal.sample(&mut rng);
                    spec.mean_scale * v
                })
                .collect();
            let draw = |domain, count| {
                let mut rng = substream(spec.seed, domain, &coords);
                (0..count)
                    .map(|_| LabeledExample {
                        feature: mean
                            .iter()
                            .map(|m| {
                                let noise: f64 = StandardNormal.sample(&mut rng);
                                (m + spec.noise_sigma * noise) as f32 as f64
                            })
                            .collect(),
                        label: class,
                        task,
                    })
                    .collect::<Vec<_>>()
            };
            data.train.extend(draw(Domain::TrainSamples, spec.train_per_class));
            data.test.extend(draw(Domain::TestSamples, spec.test_per_class));
        }
        tasks.push(data);
    }
    TaskStream::new(layout, spec.dim, tasks)
}
