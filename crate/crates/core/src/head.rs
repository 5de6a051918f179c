//! Class-incremental task layout and the expandable linear classification head.

use std::ops::Range;

use crate::error::{invalid, Error, Result};

/// Fixed class layout of a task stream: `num_tasks` tasks of `step` classes each.
///
/// Task `i` (1-based) owns the 0-based class indices `[step·(i−1), step·i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TaskLayout {
    num_tasks: usize,
    step: usize,
}

impl TaskLayout {
    pub fn new(num_tasks: usize, step: usize) -> Result<Self> {
        if num_tasks == 0 {
            return Err(invalid("num_tasks", "must be at least 1"));
        }
        if step == 0 {
            return Err(invalid("step", "must be at least 1"));
        }
        Ok(Self { num_tasks, step })
    }

    pub fn num_tasks(&self) -> usize {
        self.num_tasks
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn total_classes(&self) -> usize {
        self.num_tasks * self.step
    }

    /// Number of classes visible once `tasks` tasks have been introduced.
    pub fn classes_through(&self, tasks: usize) -> usize {
        self.step * tasks
    }

    /// Class range owned by `task` (1-based).
    pub fn task_range(&self, task: usize) -> Range<usize> {
        debug_assert!(task >= 1);
        self.step * (task - 1)..self.step * task
    }

    /// 1-based task owning `class`.
    pub fn task_of(&self, class: usize) -> usize {
        class / self.step + 1
    }

    pub fn check_label(&self, task: usize, label: usize) -> Result<()> {
        if label >= self.total_classes() {
            return Err(Error::LabelOutOfRange {
                label,
                classes: self.total_classes(),
            });
        }
        if task == 0 || task > self.num_tasks || !self.task_range(task).contains(&label) {
            return Err(Error::TaskLabelMismatch { label, task });
        }
        Ok(())
    }
}

/// Gradient of a scalar loss with respect to the head parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradient {
    /// Row-major `classes × dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl HeadGradient {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self {
            weights: vec![0.0; classes * dim],
            bias: vec![0.0; classes],
        }
    }

    /// Adds `dz ⊗ x` (outer product) to the weights and `dz` to the bias.
    pub(crate) fn accumulate(&mut self, dz: &[f64], x: &[f64]) {
        let dim = x.len();
        for (k, &g) in dz.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = &mut self.weights[k * dim..(k + 1) * dim];
            for (w, &xi) in row.iter_mut().zip(x) {
                *w += g * xi;
            }
            self.bias[k] += g;
        }
    }

    pub(crate) fn scale(&mut self, factor: f64) {
        self.weights.iter_mut().for_each(|w| *w *= factor);
        self.bias.iter_mut().for_each(|b| *b *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

/// The shared linear classifier `z = W·x + b` over the classes of the first
/// `visible_tasks` tasks. It is the only trainable object in the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    dim: usize,
    step: usize,
    visible_tasks: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl LinearHead {
    /// Zero-initialised head covering the first task.
    pub fn new(dim: usize, step: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "must be at least 1"));
        }
        if step == 0 {
            return Err(invalid("step", "must be at least 1"));
        }
        Ok(Self {
            dim,
            step,
            visible_tasks: 1,
            weights: vec![0.0; step * dim],
            bias: vec![0.0; step],
        })
    }

    pub fn from_parts(
        dim: usize,
        step: usize,
        visible_tasks: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 || step == 0 || visible_tasks == 0 {
            return Err(invalid("head", "dim, step and visible_tasks must be positive"));
        }
        let classes = step * visible_tasks;
        if weights.len() != classes * dim {
            return Err(Error::DimensionMismatch {
                expected: classes * dim,
                found: weights.len(),
            });
        }
        if bias.len() != classes {
            return Err(Error::DimensionMismatch {
                expected: classes,
                found: bias.len(),
            });
        }
        if !weights.iter().chain(&bias).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("head parameters"));
        }
        Ok(Self {
            dim,
            step,
            visible_tasks,
            weights,
            bias,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn visible_tasks(&self) -> usize {
        self.visible_tasks
    }

    /// Number of visible classes `K = step · visible_tasks`.
    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn row(&self, class: usize) -> &[f64] {
        &self.weights[class * self.dim..(class + 1) * self.dim]
    }

    #[cfg(test)]
    pub(crate) fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Logits `W·x + b`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.dim)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b)
            .collect()
    }

    /// Adds one task's worth of zero rows. Existing rows keep their index and
    /// their values bit for bit, so logits of old classes are unchanged.
    pub fn expanded(&self, layout: &TaskLayout) -> Result<Self> {
        let mut head = self.clone();
        head.expand(layout)?;
        Ok(head)
    }

    pub fn expand(&mut self, layout: &TaskLayout) -> Result<()> {
        if layout.step() != self.step {
            return Err(invalid("layout", "step differs from the head's step"));
        }
        if self.visible_tasks >= layout.num_tasks() {
            return Err(Error::ExpansionLimit {
                num_tasks: layout.num_tasks(),
            });
        }
        self.visible_tasks += 1;
        self.weights.resize(self.weights.len() + self.step * self.dim, 0.0);
        self.bias.resize(self.bias.len() + self.step, 0.0);
        Ok(())
    }

    /// `W ← W − lr·dW`, `b ← b − lr·db`, returning the updated head.
    pub fn sgd_step(&self, grad: &HeadGradient, lr: f64) -> Result<Self> {
        let mut head = self.clone();
        head.apply_sgd(grad, lr)?;
        Ok(head)
    }

    /// In-place form of [`LinearHead::sgd_step`]. On error the head is untouched.
    pub fn apply_sgd(&mut self, grad: &HeadGradient, lr: f64) -> Result<()> {
        if grad.weights.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                found: grad.weights.len(),
            });
        }
        if grad.bias.len() != self.bias.len() {
            return Err(Error::DimensionMismatch {
                expected: self.bias.len(),
                found: grad.bias.len(),
            });
        }
        if !lr.is_finite() {
            return Err(Error::NonFinite("learning rate"));
        }
        if !grad.is_finite() {
            return Err(Error::NonFinite("gradient"));
        }
        for (w, g) in self.weights.iter_mut().zip(&grad.weights) {
            *w -= lr * g;
        }
        for (b, g) in self.bias.iter_mut().zip(&grad.bias) {
            *b -= lr * g;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eye2() -> LinearHead {
        LinearHead::from_parts(2, 2, 1, vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0]).unwrap()
    }

    #[test]
    fn layout_ranges() {
        let layout = TaskLayout::new(2, 3).unwrap();
        assert_eq!(layout.total_classes(), 6);
        assert_eq!(layout.task_range(1), 0..3);
        assert_eq!(layout.task_range(2), 3..6);
        for class in 0..6 {
            assert_eq!(layout.task_of(class), class / 3 + 1);
        }
        assert!(layout.check_label(2, 4).is_ok());
        assert!(matches!(
            layout.check_label(1, 4),
            Err(Error::TaskLabelMismatch { .. })
        ));
        assert!(matches!(
            layout.check_label(2, 6),
            Err(Error::LabelOutOfRange { .. })
        ));
        assert!(TaskLayout::new(0, 3).is_err());
        assert!(TaskLayout::new(3, 0).is_err());
    }

    #[test]
    fn forward_identity_and_zero_weight() {
        assert_eq!(eye2().forward(&[3.0, -1.0]).unwrap(), vec![3.0, -1.0]);
        let head = LinearHead::from_parts(3, 2, 1, vec![0.0; 6], vec![1.0, 2.0]).unwrap();
        assert_eq!(head.forward(&[5.0, -7.0, 0.25]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn forward_rejects_wrong_dimension() {
        assert!(matches!(
            eye2().forward(&[1.0, 2.0, 3.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 3
            })
        ));
    }

    #[test]
    fn expansion_preserves_rows_and_counts() {
        let layout = TaskLayout::new(4, 5).unwrap();
        let mut head = LinearHead::new(3, 5).unwrap();
        head.apply_sgd(
            &HeadGradient {
                weights: (0..15).map(|v| v as f64).collect(),
                bias: vec![1.0; 5],
            },
            0.5,
        )
        .unwrap();
        let grown = head.expanded(&layout).unwrap();
        assert_eq!(grown.classes(), 10);
        assert_eq!(&grown.weights()[..15], head.weights());
        assert_eq!(&grown.bias()[..5], head.bias());
        // zero rows: new logits equal the zero bias on any input
        let z = grown.forward(&[0.3, -2.0, 9.0]).unwrap();
        assert!(z[5..].iter().all(|&v| v == 0.0));

        let mut full = head.clone();
        for _ in 0..3 {
            full.expand(&layout).unwrap();
        }
        assert_eq!(full.classes(), layout.total_classes());
        assert!(matches!(
            full.expand(&layout),
            Err(Error::ExpansionLimit { num_tasks: 4 })
        ));
    }

    #[test]
    fn sgd_step_identities() {
        let head = LinearHead::from_parts(2, 1, 2, vec![1.0, -2.0, 0.5, 4.0], vec![3.0, -1.0])
            .unwrap();
        let zero = HeadGradient::zeros(2, 2);
        assert_eq!(head.sgd_step(&zero, 0.7).unwrap(), head);
        let g = HeadGradient {
            weights: vec![1.0; 4],
            bias: vec![1.0; 2],
        };
        assert_eq!(head.sgd_step(&g, 0.0).unwrap(), head);
        let self_grad = HeadGradient {
            weights: head.weights().to_vec(),
            bias: head.bias().to_vec(),
        };
        let cleared = head.sgd_step(&self_grad, 1.0).unwrap();
        assert!(cleared.weights().iter().chain(cleared.bias()).all(|&v| v == 0.0));
    }

    #[test]
    fn sgd_step_rejects_non_finite_gradient() {
        let mut head = eye2();
        let before = head.clone();
        let mut g = HeadGradient::zeros(2, 2);
        g.bias[1] = f64::NAN;
        assert!(matches!(head.apply_sgd(&g, 0.1), Err(Error::NonFinite(_))));
        assert_eq!(head, before);
        assert!(head.apply_sgd(&HeadGradient::zeros(3, 2), 0.1).is_err());
    }
}
