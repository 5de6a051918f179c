//! Flat `key=value` run configuration with dotted keys.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use arc_core::{ArcConfig, LossMode, SyntheticSpec, Thresholds, TrainConfig, Variant, VariantGrid, WMode};

use crate::error::CliError;

/// Environment variable overriding `run.out_dir`.
pub const OUT_DIR_ENV: &str = "ARC_BENCH_OUT_DIR";

/// Every accepted key with its default and a one-line description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("data.source", "synthetic", "synthetic or emb1"),
    ("data.path", "", "EMB1 file, required when data.source=emb1"),
    ("data.num_tasks", "10", "number of tasks N"),
    ("data.step", "10", "classes per task s"),
    ("data.dim", "64", "feature dimension D"),
    ("data.mean_scale", "1.0", "standard deviation of class-mean coordinates"),
    ("data.noise_sigma", "0.6", "within-class standard deviation"),
    ("data.train_per_class", "100", "training examples per class"),
    ("data.test_per_class", "100", "test examples per class"),
    ("train.epochs", "5", "SGD epochs per task"),
    ("train.lr", "1.0", "training learning rate"),
    ("train.batch_size", "16", "training mini-batch size"),
    ("train.replay_per_class", "0", "replay exemplars per class, 0 is memory-free"),
    ("arc.beta", "0.8", "confidence threshold for past-task detection"),
    ("arc.gamma", "0.8", "threshold for suspected misclassification"),
    ("arc.temperature", "2.0", "task-score temperature"),
    ("arc.use_temperature", "true", "scale task scores by the temperature"),
    ("arc.lr", "0.01", "retention learning rate"),
    ("arc.retention", "true", "enable retention updates"),
    ("arc.correction", "true", "enable correction"),
    ("arc.batch_size", "64", "evaluation batch size"),
    ("arc.arc_last", "false", "apply ARC after the final task only"),
    ("arc.loss", "both", "retention objective: ce, em or both"),
    ("arc.w_mode", "ratio", "misclassification score: ratio or raw"),
    ("run.seeds", "0,1,2,3,4", "comma-separated seeds or a range a..b"),
    ("run.out_dir", "arc-out", "output directory"),
    ("otd.betas", "0,0.8", "beta values compared by validate-otd"),
    ("ablate.variants", "grid", "`grid`, or `;`-separated variants such as `loss=ce w=raw`"),
    ("ablate.losses", "ce,em,both", "grid losses"),
    ("ablate.temperature", "on,off", "grid temperature settings"),
    ("ablate.w_modes", "ratio,raw", "grid misclassification scores"),
    ("ablate.betas", "0.6,0.7,0.8,0.9", "grid beta sweep"),
    ("ablate.gammas", "0.6,0.7,0.8,0.9,1.0", "grid gamma sweep"),
];

pub fn is_key(key: &str) -> bool {
    KEYS.iter().any(|(k, _, _)| *k == key)
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Regenerated for every seed with the seed substituted.
    Synthetic(SyntheticSpec),
    Embeddings(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum VariantSet {
    Grid(VariantGrid),
    List(Vec<Variant>),
}

impl VariantSet {
    pub fn variants(&self) -> Vec<Variant> {
        match self {
            VariantSet::Grid(g) => g.variants(),
            VariantSet::List(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataSource,
    pub train: TrainConfig,
    pub arc: ArcConfig,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub otd_betas: Vec<f64>,
    pub ablate: VariantSet,
    /// Resolved key/value pairs, echoed into run metadata.
    pub values: BTreeMap<String, String>,
}

/// Raw values before typing: defaults, then file, then environment, then flags.
#[derive(Debug, Clone)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl Default for RawConfig {
    fn default() -> Self {
        Self {
            values: KEYS
                .iter()
                .map(|(k, v, _)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

impl RawConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        if !is_key(key) {
            return Err(CliError::UnknownKey(key.to_string()));
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    /// `key = value` lines; `#` starts a comment, blank lines are skipped.
    pub fn merge_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| CliError::Syntax {
                line: n + 1,
                text: line.to_string(),
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        self.merge_text(&text)
    }

    pub fn merge_env(&mut self) -> Result<(), CliError> {
        if let Ok(dir) = std::env::var(OUT_DIR_ENV) {
            self.set("run.out_dir", &dir)?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let r = Reader(self);
        let data = match r.get("data.source") {
            "synthetic" => DataSource::Synthetic(SyntheticSpec {
                num_tasks: r.parse("data.num_tasks")?,
                step: r.parse("data.step")?,
                dim: r.parse("data.dim")?,
                mean_scale: r.parse("data.mean_scale")?,
                noise_sigma: r.parse("data.noise_sigma")?,
                train_per_class: r.parse("data.train_per_class")?,
                test_per_class: r.parse("data.test_per_class")?,
                seed: 0,
            }),
            "emb1" => {
                let path = PathBuf::from(r.get("data.path"));
                if r.get("data.path").is_empty() {
                    return Err(r.bad("data.path", "required when data.source=emb1"));
                }
                if !path.is_file() {
                    return Err(r.bad("data.path", format!("{} does not exist", path.display())));
                }
                DataSource::Embeddings(path)
            }
            other => {
                return Err(r.bad("data.source", format!("expected synthetic or emb1, got `{other}`")))
            }
        };
        if let DataSource::Synthetic(spec) = &data {
            spec.validate().map_err(|e| r.bad("data", e))?;
        }

        let train = TrainConfig {
            epochs: r.parse("train.epochs")?,
            lr: r.parse("train.lr")?,
            batch_size: r.parse("train.batch_size")?,
            replay_per_class: r.parse("train.replay_per_class")?,
            seed: 0,
        };
        train.validate().map_err(|e| r.bad("train", e))?;

        let beta: f64 = r.parse("arc.beta")?;
        let gamma: f64 = r.parse("arc.gamma")?;
        let arc = ArcConfig {
            thresholds: Thresholds::new(beta, gamma).map_err(|e| r.bad("arc.beta/arc.gamma", e))?,
            temperature: r.parse("arc.temperature")?,
            use_temperature: r.flag("arc.use_temperature")?,
            lr: r.parse("arc.lr")?,
            retention_enabled: r.flag("arc.retention")?,
            correction_enabled: r.flag("arc.correction")?,
            batch_size: r.parse("arc.batch_size")?,
            arc_last: r.flag("arc.arc_last")?,
            loss: r.parse("arc.loss")?,
            w_mode: r.parse("arc.w_mode")?,
        };
        arc.validate().map_err(|e| r.bad("arc", e))?;

        let seeds = parse_seeds(r.get("run.seeds")).map_err(|e| r.bad("run.seeds", e))?;
        let out_dir = PathBuf::from(r.get("run.out_dir"));
        if out_dir.as_os_str().is_empty() {
            return Err(r.bad("run.out_dir", "must not be empty"));
        }
        let otd_betas: Vec<f64> = r.list("otd.betas")?;
        for &b in &otd_betas {
            Thresholds::new(b, gamma).map_err(|e| r.bad("otd.betas", e))?;
        }

        let ablate = match r.get("ablate.variants") {
            "grid" => VariantSet::Grid(VariantGrid {
                losses: r.list::<LossMode>("ablate.losses")?,
                temperature: r
                    .items("ablate.temperature")
                    .map(|v| parse_switch(v).ok_or_else(|| r.bad("ablate.temperature", format!("`{v}` is not on/off"))))
                    .collect::<Result<_, _>>()?,
                w_modes: r.list::<WMode>("ablate.w_modes")?,
                betas: r.list("ablate.betas")?,
                gammas: r.list("ablate.gammas")?,
            }),
            list => VariantSet::List(
                list.split(';')
                    .map(str::trim)
                    .filter(|v| !v.is_empty())
                    .map(Variant::parse)
                    .collect::<Result<_, _>>()
                    .map_err(|e| r.bad("ablate.variants", e))?,
            ),
        };
        for v in ablate.variants() {
            v.apply(&arc).map_err(|e| r.bad("ablate", format!("variant `{v}`: {e}")))?;
        }

        Ok(RunConfig {
            data,
            train,
            arc,
            seeds,
            out_dir,
            otd_betas,
            ablate,
            values: self.values.clone(),
        })
    }
}

struct Reader<'a>(&'a RawConfig);

impl Reader<'_> {
    fn get(&self, key: &str) -> &str {
        self.0.get(key)
    }

    fn bad(&self, key: &str, reason: impl ToString) -> CliError {
        CliError::Value {
            key: key.to_string(),
            reason: reason.to_string(),
        }
    }

    fn parse<T>(&self, key: &str) -> Result<T, CliError>
    where
        T: std::str::FromStr,
        T::Err: std::fmt::Display,
    {
        let v = self.get(key);
        v.parse().map_err(|e| self.bad(key, format!("`{v}`: {e}")))
    }

    fn flag(&self, key: &str) -> Result<bool, CliError> {
        let v = self.get(key);
        parse_switch(v).ok_or_else(|| self.bad(key, format!("`{v}` is not a boolean")))
    }

    fn items<'b>(&'b self, key: &str) -> impl Iterator<Item = &'b str> {
        self.get(key).split(',').map(str::trim).filter(|v| !v.is_empty())
    }

    fn list<T>(&self, key: &str) -> Result<Vec<T>, CliError>
    where
        T: std::str::FromStr,
        T::Err: std::fmt::Display,
    {
        self.items(key)
            .map(|v| v.parse().map_err(|e| self.bad(key, format!("`{v}`: {e}"))))
            .collect()
    }
}

fn parse_switch(v: &str) -> Option<bool> {
    match v {
        "true" | "on" | "yes" | "1" => Some(true),
        "false" | "off" | "no" | "0" => Some(false),
        _ => None,
    }
}

fn parse_seeds(v: &str) -> Result<Vec<u64>, String> {
    let seeds: Vec<u64> = if let Some((a, b)) = v.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|e| format!("`{a}`: {e}"))?;
        let b: u64 = b.trim().parse().map_err(|e| format!("`{b}`: {e}"))?;
        (a..b).collect()
    } else {
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| format!("`{s}`: {e}")))
            .collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err("seed list is empty".into());
    }
    Ok(seeds)
}

impl RunConfig {
    pub fn defaults() -> Self {
        RawConfig::default().resolve().expect("defaults are valid")
    }

    /// `key=value` lines in key order.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn train_for(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.train.clone()
        }
    }
}
