use std::fmt;

use crate::arc::ArcConfig;
use crate::data::TaskStream;
use crate::error::{invalid, Error, Result};
use crate::harness::{evaluate_stages, train_stages, MetricsReport, RMatrix};
use crate::loss::LossMode;
use crate::otd::{Thresholds, WMode};
use crate::train::TrainConfig;

/// Overrides applied on top of a base [`ArcConfig`]. Unset fields keep the
/// base value, so the empty variant reproduces the base pipeline.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Variant {
    pub loss: Option<LossMode>,
    pub use_temperature: Option<bool>,
    pub w_mode: Option<WMode>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
}

fn parse_float(key: &str, v: &str) -> Result<f64> {
    v.parse()
        .map_err(|_| invalid("variant", format!("{key}: `{v}` is not a number")))
}

impl Variant {
    /// Parses `key=value` pairs separated by commas or whitespace.
    /// Keys: `loss` (ce|em|both), `temperature` (on|off), `w` (ratio|raw),
    /// `beta`, `gamma`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut v = Self::default();
        for pair in spec
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|p| !p.is_empty())
        {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| invalid("variant", format!("`{pair}` is not key=value")))?;
            match key {
                "loss" => v.loss = Some(value.parse().map_err(|e| invalid("variant", e))?),
                "temperature" => {
                    v.use_temperature = Some(match value {
                        "on" => true,
                        "off" => false,
                        other => {
                            return Err(invalid(
                                "variant",
                                format!("temperature: expected on or off, got `{other}`"),
                            ))
                        }
                    })
                }
                "w" => v.w_mode = Some(value.parse().map_err(|e| invalid("variant", e))?),
                "beta" => v.beta = Some(parse_float(key, value)?),
                "gamma" => v.gamma = Some(parse_float(key, value)?),
                other => return Err(Error::UnknownVariantKey(other.to_string())),
            }
        }
        Ok(v)
    }

    pub fn apply(&self, base: &ArcConfig) -> Result<ArcConfig> {
        let cfg = ArcConfig {
            loss: self.loss.unwrap_or(base.loss),
            use_temperature: self.use_temperature.unwrap_or(base.use_temperature),
            w_mode: self.w_mode.unwrap_or(base.w_mode),
            thresholds: Thresholds::new(
                self.beta.unwrap_or(base.thresholds.beta),
                self.gamma.unwrap_or(base.thresholds.gamma),
            )?,
            ..base.clone()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical key naming every ablated setting of `cfg`.
    pub fn key_of(cfg: &ArcConfig) -> String {
        format!(
            "loss={} temperature={} w={} beta={} gamma={}",
            cfg.loss.as_str(),
            if cfg.use_temperature { "on" } else { "off" },
            cfg.w_mode.as_str(),
            cfg.thresholds.beta,
            cfg.thresholds.gamma,
        )
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(l) = self.loss {
            parts.push(format!("loss={}", l.as_str()));
        }
        if let Some(t) = self.use_temperature {
            parts.push(format!("temperature={}", if t { "on" } else { "off" }));
        }
        if let Some(w) = self.w_mode {
            parts.push(format!("w={}", w.as_str()));
        }
        if let Some(b) = self.beta {
            parts.push(format!("beta={b}"));
        }
        if let Some(g) = self.gamma {
            parts.push(format!("gamma={g}"));
        }
        f.write_str(&parts.join(" "))
    }
}

/// Cartesian product over the ablated settings, in the order
/// losses × temperature × w × beta × gamma.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantGrid {
    pub losses: Vec<LossMode>,
    pub temperature: Vec<bool>,
    pub w_modes: Vec<WMode>,
    pub betas: Vec<f64>,
    pub gammas: Vec<f64>,
}

impl VariantGrid {
    /// The full grid: every loss subset, temperature on/off, both w modes,
    /// beta over 0.6..=0.9 and gamma over 0.6..=1.0 in steps of 0.1.
    pub fn full() -> Self {
        Self {
            losses: vec![LossMode::CrossEntropy, LossMode::Entropy, LossMode::Both],
            temperature: vec![true, false],
            w_modes: vec![WMode::Ratio, WMode::RawConfidence],
            betas: vec![0.6, 0.7, 0.8, 0.9],
            gammas: vec![0.6, 0.7, 0.8, 0.9, 1.0],
        }
    }

    /// A grid holding only `base`'s settings.
    pub fn single(base: &ArcConfig) -> Self {
        Self {
            losses: vec![base.loss],
            temperature: vec![base.use_temperature],
            w_modes: vec![base.w_mode],
            betas: vec![base.thresholds.beta],
            gammas: vec![base.thresholds.gamma],
        }
    }

    pub fn len(&self) -> usize {
        self.losses.len()
            * self.temperature.len()
            * self.w_modes.len()
            * self.betas.len()
            * self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn variants(&self) -> Vec<Variant> {
        let mut out = Vec::with_capacity(self.len());
        for &loss in &self.losses {
            for &t in &self.temperature {
                for &w in &self.w_modes {
                    for &beta in &self.betas {
                        for &gamma in &self.gammas {
                            out.push(Variant {
                                loss: Some(loss),
                                use_temperature: Some(t),
                                w_mode: Some(w),
                                beta: Some(beta),
                                gamma: Some(gamma),
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationResult {
    pub key: String,
    pub config: ArcConfig,
    pub report: MetricsReport,
    pub r: RMatrix,
}

/// Trains once, then evaluates every variant's ARC pipeline on the same
/// stage heads and test orders.
pub fn ablation_grid(
    stream: &TaskStream,
    train_cfg: &TrainConfig,
    base: &ArcConfig,
    variants: &[Variant],
) -> Result<Vec<AblationResult>> {
    if variants.is_empty() {
        return Ok(Vec::new());
    }
    let configs = variants
        .iter()
        .map(|v| v.apply(base))
        .collect::<Result<Vec<_>>>()?;
    let heads = train_stages(stream, train_cfg)?;
    configs
        .into_iter()
        .map(|cfg| {
            let eval = evaluate_stages(stream, &heads, train_cfg.seed, &cfg)?;
            Ok(AblationResult {
                key: Variant::key_of(&cfg),
                report: MetricsReport::from_r(&eval.r, train_cfg, &cfg)?,
                config: cfg,
                r: eval.r,
            })
        })
        .collect()
}
