//! Stable softmax, the two retention losses and their closed-form gradients.

use crate::error::{Error, Result};
use crate::head::{HeadGradient, LinearHead};

/// Floor applied to probabilities before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-12;

/// Softmax with max-subtraction. Rejects empty or non-finite input.
pub fn softmax(z: &[f64]) -> Result<Vec<f64>> {
    if z.is_empty() {
        return Err(Error::EmptyLogits);
    }
    if !z.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    Ok(softmax_unchecked(z))
}

pub(crate) fn softmax_unchecked(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    p
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// `−log p[label]` with the probability floored at [`LOG_FLOOR`].
pub fn cross_entropy(p: &[f64], label: usize) -> Result<f64> {
    let &pl = p.get(label).ok_or(Error::LabelOutOfRange {
        label,
        classes: p.len(),
    })?;
    Ok(-pl.max(LOG_FLOOR).ln())
}

/// Shannon entropy `−Σ p log p`, with `0·log 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.max(LOG_FLOOR).ln())
        .sum::<f64>()
}

/// Which terms of the retention objective are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum LossMode {
    CrossEntropy,
    Entropy,
    #[default]
    Both,
}

impl LossMode {
    pub fn uses_ce(self) -> bool {
        matches!(self, Self::CrossEntropy | Self::Both)
    }

    pub fn uses_em(self) -> bool {
        matches!(self, Self::Entropy | Self::Both)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::CrossEntropy => "ce",
            Self::Entropy => "em",
            Self::Both => "both",
        }
    }
}

impl std::str::FromStr for LossMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "ce" => Ok(Self::CrossEntropy),
            "em" => Ok(Self::Entropy),
            "both" => Ok(Self::Both),
            other => Err(format!("expected ce, em or both, got `{other}`")),
        }
    }
}

/// Loss value and its gradient with respect to the logits.
pub(crate) fn logit_gradient(z: &[f64], label: usize, mode: LossMode) -> (Vec<f64>, f64) {
    let p = softmax_unchecked(z);
    let mut dz = vec![0.0; p.len()];
    let mut loss = 0.0;
    if mode.uses_ce() {
        loss += -p[label].max(LOG_FLOOR).ln();
        dz.iter_mut().zip(&p).for_each(|(d, &pi)| *d += pi);
        dz[label] -= 1.0;
    }
    if mode.uses_em() {
        // dH/dz_i = −p_i (log p_i − Σ_j p_j log p_j)
        let logp: Vec<f64> = p.iter().map(|&v| v.max(LOG_FLOOR).ln()).collect();
        let plogp: f64 = p.iter().zip(&logp).map(|(pi, li)| pi * li).sum();
        loss += -plogp;
        for ((d, &pi), &li) in dz.iter_mut().zip(&p).zip(&logp) {
            *d -= pi * (li - plogp);
        }
    }
    (dz, loss)
}

/// Analytic gradient of cross-entropy plus prediction entropy at the current head for one sample,
/// with `pseudo_label` as the cross-entropy target.
pub fn retention_gradient(
    head: &LinearHead,
    x: &[f64],
    pseudo_label: usize,
) -> Result<(HeadGradient, f64)> {
    loss_gradient(head, x, pseudo_label, LossMode::Both)
}

/// Like [`retention_gradient`] with a selectable subset of the two losses.
pub fn loss_gradient(
    head: &LinearHead,
    x: &[f64],
    label: usize,
    mode: LossMode,
) -> Result<(HeadGradient, f64)> {
    let z = head.forward(x)?;
    if label >= z.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: z.len(),
        });
    }
    let (dz, loss) = logit_gradient(&z, label, mode);
    let mut grad = HeadGradient::zeros(head.classes(), head.dim());
    grad.accumulate(&dz, x);
    Ok((grad, loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_exact_cases() {
        let p = softmax(&[2f64.ln(), 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(p[2], 0.25, epsilon = 1e-15);
        for c in [-1e6, -3.5, 0.0, 42.0, 1e6] {
            assert_eq!(softmax(&[c; 4]).unwrap(), vec![0.25; 4]);
        }
        let p = softmax(&[1000.0, 0.0]).unwrap();
        assert_eq!(p[0], 1.0);
        assert!(p[1] >= 0.0 && p[1] < 1e-300);
    }

    #[test]
    fn softmax_rejects_bad_input() {
        assert!(matches!(softmax(&[]), Err(Error::EmptyLogits)));
        assert!(matches!(softmax(&[0.0, f64::NAN]), Err(Error::NonFinite(_))));
        assert!(matches!(softmax(&[f64::INFINITY]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), Some(1));
        assert_eq!(argmax(&[0.0; 4]), Some(0));
        assert_eq!(argmax(&[]), None);
    }

    #[test]
    fn cross_entropy_values() {
        assert_abs_diff_eq!(
            cross_entropy(&[0.5, 0.25, 0.25], 0).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-15
        );
        assert_eq!(cross_entropy(&[1.0, 0.0, 0.0], 0).unwrap(), 0.0);
        assert_abs_diff_eq!(
            cross_entropy(&[0.1; 10], 3).unwrap(),
            10f64.ln(),
            epsilon = 1e-12
        );
        assert!(matches!(
            cross_entropy(&[0.5, 0.5], 2),
            Err(Error::LabelOutOfRange { label: 2, classes: 2 })
        ));
        // floor keeps the loss finite
        assert_abs_diff_eq!(
            cross_entropy(&[1.0, 0.0], 1).unwrap(),
            -LOG_FLOOR.ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn entropy_values() {
        assert_eq!(entropy(&[0.0, 1.0, 0.0]), 0.0);
        assert_abs_diff_eq!(entropy(&[0.125; 8]), 8f64.ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(
            entropy(&[0.5, 0.25, 0.25]),
            1.5 * std::f64::consts::LN_2,
            epsilon = 1e-15
        );
    }

    #[test]
    fn uniform_logits_reduce_to_cross_entropy_gradient() {
        let head = LinearHead::from_parts(3, 4, 1, vec![0.0; 12], vec![0.7; 4]).unwrap();
        let x = [1.0, -2.0, 0.5];
        let (both, _) = retention_gradient(&head, &x, 2).unwrap();
        let (ce, _) = loss_gradient(&head, &x, 2, LossMode::CrossEntropy).unwrap();
        assert_eq!(both, ce);
        let (em, _) = loss_gradient(&head, &x, 2, LossMode::Entropy).unwrap();
        assert!(em.weights.iter().chain(&em.bias).all(|&g| g == 0.0));
    }

    #[test]
    fn gradient_vanishes_at_confident_pseudo_label() {
        let mut bias = vec![0.0; 5];
        bias[3] = 60.0;
        let head = LinearHead::from_parts(2, 5, 1, vec![0.0; 10], bias).unwrap();
        let (grad, loss) = retention_gradient(&head, &[0.4, -1.1], 3).unwrap();
        assert!(loss < 1e-20);
        assert!(grad.weights.iter().chain(&grad.bias).all(|g| g.abs() < 1e-20));
    }

    /// Central finite differences of CE(softmax(Wx+b)) + H(softmax(Wx+b)),
    /// evaluated through the public scalar losses only.
    fn fd_gradient(head: &LinearHead, x: &[f64], label: usize, h: f64) -> (Vec<f64>, Vec<f64>) {
        let loss_at = |w: &[f64], b: &[f64]| {
            let hd = LinearHead::from_parts(
                head.dim(),
                head.step(),
                head.visible_tasks(),
                w.to_vec(),
                b.to_vec(),
            )
            .unwrap();
            let p = softmax(&hd.forward(x).unwrap()).unwrap();
            cross_entropy(&p, label).unwrap() + entropy(&p)
        };
        let w0 = head.weights().to_vec();
        let b0 = head.bias().to_vec();
        let mut dw = vec![0.0; w0.len()];
        for i in 0..w0.len() {
            let (mut plus, mut minus) = (w0.clone(), w0.clone());
            plus[i] += h;
            minus[i] -= h;
            dw[i] = (loss_at(&plus, &b0) - loss_at(&minus, &b0)) / (2.0 * h);
        }
        let mut db = vec![0.0; b0.len()];
        for i in 0..b0.len() {
            let (mut plus, mut minus) = (b0.clone(), b0.clone());
            plus[i] += h;
            minus[i] -= h;
            db[i] = (loss_at(&w0, &plus) - loss_at(&w0, &minus)) / (2.0 * h);
        }
        (dw, db)
    }

    fn random_instance(seed: u64, dim: usize, classes: usize) -> (LinearHead, Vec<f64>, usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = (0..dim * classes).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = (0..classes).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect();
        let label = rng.random_range(0..classes);
        (LinearHead::from_parts(dim, classes, 1, w, b).unwrap(), x, label)
    }

    pub(crate) fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
        let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-8);
        analytic
            .iter()
            .zip(numeric)
            .map(|(a, n)| (a - n).abs() / scale)
            .fold(0.0, f64::max)
    }

    #[test]
    fn gradient_matches_finite_differences_seed_11() {
        let (head, x, label) = random_instance(11, 5, 6);
        let (grad, _) = retention_gradient(&head, &x, label).unwrap();
        let (dw, db) = fd_gradient(&head, &x, label, 1e-4);
        assert!(max_relative_error(&grad.weights, &dw) <= 1e-5);
        assert!(max_relative_error(&grad.bias, &db) <= 1e-5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn softmax_is_shift_invariant(
            z in prop::collection::vec(-50.0f64..50.0, 1..16),
            c in -1e3f64..1e3,
        ) {
            let p = softmax(&z).unwrap();
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            let q = softmax(&shifted).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn softmax_is_a_distribution(z in prop::collection::vec(-700.0f64..700.0, 1..32)) {
            let p = softmax(&z).unwrap();
            prop_assert!(p.iter().all(|&v| v >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn gradient_matches_finite_differences(
            seed in any::<u64>(),
            dim in 1usize..=8,
            classes in 2usize..=12,
        ) {
            let (head, x, label) = random_instance(seed, dim, classes);
            let (grad, _) = retention_gradient(&head, &x, label).unwrap();
            let (dw, db) = fd_gradient(&head, &x, label, 1e-4);
            prop_assert!(max_relative_error(&grad.weights, &dw) <= 1e-5);
            prop_assert!(max_relative_error(&grad.bias, &db) <= 1e-5);
        }

        #[test]
        fn sgd_round_trip_restores_head(
            seed in any::<u64>(),
            lr in 1e-4f64..2.0,
        ) {
            let (head, x, label) = random_instance(seed, 4, 5);
            let (grad, _) = retention_gradient(&head, &x, label).unwrap();
            let back = head.sgd_step(&grad, lr).unwrap().sgd_step(&grad, -lr).unwrap();
            for (a, b) in back.weights().iter().chain(back.bias()).zip(head.weights().iter().chain(head.bias())) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
