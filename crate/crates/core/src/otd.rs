//! Out-of-task detection.
//!
//! A test sample at task `t` is sorted into one of three branches from its
//! own logits: a confident prediction into a past-task class (retention
//! candidate), a low-ratio prediction into a current-task class (likely a
//! past-task sample pulled over by classifier bias, correction candidate),
//! or neither.

use crate::error::{invalid, Error, Result};
use crate::loss::{argmax, softmax_unchecked};

/// Detection thresholds: `beta` gates retention, `gamma` gates correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub beta: f64,
    pub gamma: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            beta: 0.8,
            gamma: 0.8,
        }
    }
}

impl Thresholds {
    /// `beta` must lie in `[0, 1]`; `gamma` in `[0, +∞]`. The closed ends
    /// admit the all-flagging limits used in validation sweeps.
    pub fn new(beta: f64, gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(invalid("beta", format!("{beta} not in [0, 1]")));
        }
        if gamma.is_nan() || gamma < 0.0 {
            return Err(invalid("gamma", format!("{gamma} not in [0, inf]")));
        }
        Ok(Self { beta, gamma })
    }
}

/// Quantity compared against `gamma` for current-task predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum WMode {
    /// `w = c / ĉ`
    #[default]
    Ratio,
    /// `w = c` (ablation)
    RawConfidence,
}

impl WMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ratio => "ratio",
            Self::RawConfidence => "raw",
        }
    }
}

impl std::str::FromStr for WMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "ratio" => Ok(Self::Ratio),
            "raw" => Ok(Self::RawConfidence),
            other => Err(format!("expected ratio or raw, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OtdDecision {
    PastCorrect,
    PastMisclassified,
    Passthrough,
}

impl OtdDecision {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::PastCorrect => "past_correct",
            Self::PastMisclassified => "past_misclassified",
            Self::Passthrough => "passthrough",
        }
    }
}

impl std::str::FromStr for OtdDecision {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "past_correct" => Ok(Self::PastCorrect),
            "past_misclassified" => Ok(Self::PastMisclassified),
            "passthrough" => Ok(Self::Passthrough),
            other => Err(format!("unknown decision `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceReport {
    pub predicted_class: usize,
    /// Max softmax probability over all visible classes.
    pub c: f64,
    /// Max softmax probability over past-task logits only; `None` at t = 1.
    pub c_hat: Option<f64>,
    /// `c / ĉ`; `None` at t = 1.
    pub w: Option<f64>,
}

fn check_shape(z: &[f64], t: usize, s: usize) -> Result<()> {
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

/// `(ŷ, c)`: argmax of the logits (lowest index on ties) and its softmax probability.
pub fn confidence(z: &[f64]) -> Result<(usize, f64)> {
    if z.is_empty() {
        return Err(Error::EmptyLogits);
    }
    if !z.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    let y = argmax(z).expect("nonempty");
    Ok((y, softmax_unchecked(z)[y]))
}

/// `ĉ`: max of the softmax taken over the first `s·(t−1)` logits only.
pub fn masked_confidence(z: &[f64], t: usize, s: usize) -> Result<f64> {
    check_shape(z, t, s)?;
    if t < 2 {
        return Err(Error::NoPastTasks(t));
    }
    Ok(masked_confidence_unchecked(z, s * (t - 1)))
}

fn masked_confidence_unchecked(z: &[f64], past: usize) -> f64 {
    softmax_unchecked(&z[..past])
        .into_iter()
        .fold(0.0, f64::max)
}

/// Sorts a sample into its detection branch using the ratio `w = c/ĉ`.
pub fn classify_sample(
    z: &[f64],
    t: usize,
    s: usize,
    th: &Thresholds,
) -> Result<(OtdDecision, ConfidenceReport)> {
    classify_sample_with(z, t, s, th, WMode::Ratio)
}

pub fn classify_sample_with(
    z: &[f64],
    t: usize,
    s: usize,
    th: &Thresholds,
    mode: WMode,
) -> Result<(OtdDecision, ConfidenceReport)> {
    check_shape(z, t, s)?;
    let (y, c) = confidence(z)?;
    let mut report = ConfidenceReport {
        predicted_class: y,
        c,
        c_hat: None,
        w: None,
    };
    if t == 1 {
        return Ok((OtdDecision::Passthrough, report));
    }
    let past = s * (t - 1);
    let c_hat = masked_confidence_unchecked(z, past);
    let w = c / c_hat;
    report.c_hat = Some(c_hat);
    report.w = Some(w);

    let decision = if y < past {
        if c >= th.beta {
            OtdDecision::PastCorrect
        } else {
            OtdDecision::Passthrough
        }
    } else {
        let score = match mode {
            WMode::Ratio => w,
            WMode::RawConfidence => c,
        };
        if score <= th.gamma {
            OtdDecision::PastMisclassified
        } else {
            OtdDecision::Passthrough
        }
    };
    Ok((decision, report))
}
