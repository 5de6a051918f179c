//! Task streams of frozen feature vectors.

mod emb1;
mod synthetic;

pub use emb1::{decode, encode, load_embeddings, write_embeddings, HEADER_LEN, MAGIC, VERSION};
pub use synthetic::{generate_synthetic, SyntheticSpec};

use crate::error::{invalid, Error, Result};
use crate::head::TaskLayout;

/// One precomputed feature vector with its global class and 1-based task.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub feature: Vec<f64>,
    pub label: usize,
    pub task: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaskData {
    pub train: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
}

/// Ordered per-task train/test sets over a fixed class layout.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskStream {
    layout: TaskLayout,
    dim: usize,
    tasks: Vec<TaskData>,
}

impl TaskStream {
    /// Validates that every example sits in its task's class range and that
    /// all features share dimension `dim` and are finite.
    pub fn new(layout: TaskLayout, dim: usize, tasks: Vec<TaskData>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "must be at least 1"));
        }
        if tasks.len() != layout.num_tasks() {
            return Err(invalid(
                "tasks",
                format!("expected {} tasks, got {}", layout.num_tasks(), tasks.len()),
            ));
        }
        for (i, task) in tasks.iter().enumerate() {
            for ex in task.train.iter().chain(&task.test) {
                if ex.task != i + 1 {
                    return Err(Error::TaskLabelMismatch {
                        label: ex.label,
                        task: i + 1,
                    });
                }
                layout.check_label(ex.task, ex.label)?;
                if ex.feature.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: ex.feature.len(),
                    });
                }
                if !ex.feature.iter().all(|v| v.is_finite()) {
                    return Err(Error::NonFinite("feature"));
                }
            }
        }
        Ok(Self { layout, dim, tasks })
    }

    pub fn layout(&self) -> &TaskLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    /// Data of 1-based `task`.
    pub fn task(&self, task: usize) -> &TaskData {
        &self.tasks[task - 1]
    }

    pub fn tasks(&self) -> &[TaskData] {
        &self.tasks
    }

    pub fn num_examples(&self) -> usize {
        self.tasks
            .iter()
            .map(|t| t.train.len() + t.test.len())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(label: usize, task: usize, dim: usize) -> LabeledExample {
        LabeledExample {
            feature: vec![0.5; dim],
            label,
            task,
        }
    }

    #[test]
    fn validation_catches_layout_violations() {
        let layout = TaskLayout::new(2, 2).unwrap();
        let good = vec![
            TaskData {
                train: vec![ex(0, 1, 3)],
                test: vec![ex(1, 1, 3)],
            },
            TaskData {
                train: vec![ex(2, 2, 3)],
                test: vec![ex(3, 2, 3)],
            },
        ];
        assert!(TaskStream::new(layout, 3, good.clone()).is_ok());

        let mut wrong_task = good.clone();
        wrong_task[0].train[0].label = 2;
        assert!(TaskStream::new(layout, 3, wrong_task).is_err());

        let mut wrong_dim = good.clone();
        wrong_dim[1].test[0].feature.push(1.0);
        assert!(matches!(
            TaskStream::new(layout, 3, wrong_dim),
            Err(Error::DimensionMismatch { .. })
        ));

        let mut nan = good.clone();
        nan[1].train[0].feature[0] = f64::NAN;
        assert!(TaskStream::new(layout, 3, nan).is_err());

        assert!(TaskStream::new(layout, 3, good[..1].to_vec()).is_err());
        assert!(TaskStream::new(layout, 0, good).is_err());
    }
}
