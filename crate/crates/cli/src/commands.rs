//! The four experiment subcommands. Each returns an in-memory bundle; writing
//! it is left to the caller.

use std::path::PathBuf;

use arc_core::harness::{evaluate_stages, train_stages, EvaluatedSample, StreamEvaluation};
use arc_core::{
    ablation_grid, bias_histogram, generate_synthetic, linear_probe_experiment, load_embeddings,
    otd_validation, run_stream, ArcConfig, OtdValidationReport, RMatrix, TaskStream, Thresholds,
    Variant,
};
use rayon::prelude::*;

use crate::config::{DataSource, RunConfig};
use crate::error::CliError;
use crate::report::{fmt_num, fmt_opt, Bundle, Table, METADATA_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Probe,
    Ablate,
    ValidateOtd,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Probe => "probe",
            Command::Ablate => "ablate",
            Command::ValidateOtd => "validate-otd",
        }
    }

    pub fn execute(self, cfg: &RunConfig) -> Result<Bundle, CliError> {
        match self {
            Command::Run => cmd_run(cfg),
            Command::Probe => cmd_probe(cfg),
            Command::Ablate => cmd_ablate(cfg),
            Command::ValidateOtd => cmd_validate_otd(cfg),
        }
    }

    /// Bundle directory for this command under `run.out_dir`.
    pub fn target(self, cfg: &RunConfig) -> PathBuf {
        cfg.out_dir.join(self.name())
    }
}

enum Streams {
    PerSeed,
    Fixed(TaskStream),
}

impl Streams {
    fn open(cfg: &RunConfig) -> Result<Self, CliError> {
        Ok(match &cfg.data {
            DataSource::Synthetic(_) => Streams::PerSeed,
            DataSource::Embeddings(path) => Streams::Fixed(load_embeddings(path)?),
        })
    }

    fn for_seed(&self, cfg: &RunConfig, seed: u64) -> Result<TaskStream, CliError> {
        match (self, &cfg.data) {
            (Streams::Fixed(s), _) => Ok(s.clone()),
            (Streams::PerSeed, DataSource::Synthetic(spec)) => Ok(generate_synthetic(
                &arc_core::SyntheticSpec {
                    seed,
                    ..spec.clone()
                },
            )?),
            (Streams::PerSeed, DataSource::Embeddings(_)) => unreachable!("opened as fixed"),
        }
    }
}

/// Runs `f` for every seed on the worker pool; results come back in seed
/// list order.
fn per_seed<T, F>(cfg: &RunConfig, f: F) -> Result<Vec<(u64, T)>, CliError>
where
    T: Send,
    F: Fn(u64, TaskStream) -> Result<T, CliError> + Sync,
{
    let streams = Streams::open(cfg)?;
    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    seeds
        .par_iter()
        .map(|&seed| {
            let stream = streams.for_seed(cfg, seed)?;
            Ok((seed, f(seed, stream)?))
        })
        .collect()
}

fn metadata(cfg: &RunConfig, cmd: Command) -> String {
    format!(
        "tool=arc-bench\ntool.version={}\ncommand={}\n{}",
        env!("CARGO_PKG_VERSION"),
        cmd.name(),
        cfg.echo()
    )
}

pub const RECORD_HEADER: &[&str] = &[
    "seed",
    "mode",
    "stage",
    "index",
    "task",
    "label",
    "initial_class",
    "final_class",
    "decision",
    "corrected_task",
    "retention_applied",
];

fn push_records(table: &mut Table, seed: u64, mode: &str, stage: usize, samples: &[EvaluatedSample]) {
    for (i, s) in samples.iter().enumerate() {
        table.push(vec![
            seed.to_string(),
            mode.to_string(),
            stage.to_string(),
            i.to_string(),
            s.task.to_string(),
            s.label.to_string(),
            s.record.initial_class.to_string(),
            s.record.final_class.to_string(),
            s.record.decision.as_str().to_string(),
            s.record
                .corrected_task
                .map(|t| t.to_string())
                .unwrap_or_default(),
            u8::from(s.record.retention_applied).to_string(),
        ]);
    }
}

fn push_r(table: &mut Table, lead: &[String], r: &RMatrix) {
    for (t, row) in r.rows().iter().enumerate() {
        for (i, v) in row.iter().enumerate() {
            let mut cells = lead.to_vec();
            cells.extend([(t + 1).to_string(), (i + 1).to_string(), fmt_num(*v)]);
            table.push(cells);
        }
    }
}

pub const OTD_HEADER: &[&str] = &[
    "seed",
    "mode",
    "beta",
    "gamma",
    "w_mode",
    "stage",
    "total",
    "past_correct_flagged",
    "past_correct_hits",
    "past_misclassified_flagged",
    "past_misclassified_hits",
    "assumption1_precision",
    "assumption2_precision",
    "assumption1_rate",
    "assumption2_rate",
];

fn push_otd(table: &mut Table, seed: u64, mode: &str, arc: &ArcConfig, stage: usize, r: &OtdValidationReport) {
    table.push(vec![
        seed.to_string(),
        mode.to_string(),
        fmt_num(arc.thresholds.beta),
        fmt_num(arc.thresholds.gamma),
        arc.w_mode.as_str().to_string(),
        stage.to_string(),
        r.total.to_string(),
        r.past_correct_flagged.to_string(),
        r.past_correct_hits.to_string(),
        r.past_misclassified_flagged.to_string(),
        r.past_misclassified_hits.to_string(),
        fmt_opt(r.assumption1_precision),
        fmt_opt(r.assumption2_precision),
        fmt_num(r.assumption1_rate),
        fmt_num(r.assumption2_rate),
    ]);
}

fn mean_std(xs: &[f64]) -> (f64, Option<f64>) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = (xs.len() > 1)
        .then(|| (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (mean, std)
}

struct SeedRun {
    baseline: StreamEvaluation,
    arc: StreamEvaluation,
    layout: arc_core::TaskLayout,
    reports: [arc_core::MetricsReport; 2],
}

/// Trains every seed, evaluates with and without ARC and tabulates metrics,
/// accuracy matrices, final-stage bias histograms, detection statistics and
/// final-stage records.
pub fn cmd_run(cfg: &RunConfig) -> Result<Bundle, CliError> {
    let runs = per_seed(cfg, |seed, stream| {
        let run = run_stream(&stream, &cfg.train_for(seed), &cfg.arc)?;
        Ok(SeedRun {
            layout: *stream.layout(),
            reports: [run.arc_report, run.baseline_report],
            baseline: run.baseline,
            arc: run.arc,
        })
    })?;

    let mut metrics = Table::new(&[
        "seed",
        "mode",
        "average_accuracy",
        "forgetting",
        "updates",
        "warnings",
    ]);
    let mut r_table = Table::new(&["seed", "mode", "stage", "task", "accuracy"]);
    let mut hist = Table::new(&["seed", "mode", "stage", "task", "count"]);
    let mut otd = Table::new(OTD_HEADER);
    let mut records = Table::new(RECORD_HEADER);
    let mut acc = [Vec::new(), Vec::new()];
    let mut fgt = [Vec::new(), Vec::new()];

    for (seed, run) in &runs {
        for (m, (mode, eval)) in [("arc", &run.arc), ("baseline", &run.baseline)]
            .into_iter()
            .enumerate()
        {
            let report = &run.reports[m];
            metrics.push(vec![
                seed.to_string(),
                mode.to_string(),
                fmt_num(report.average_accuracy),
                fmt_opt(report.forgetting),
                eval.updates.to_string(),
                eval.warnings.len().to_string(),
            ]);
            acc[m].push(report.average_accuracy);
            if let Some(f) = report.forgetting {
                fgt[m].push(f);
            }
            push_r(&mut r_table, &[seed.to_string(), mode.to_string()], &eval.r);

            let t = eval.stages.len();
            let last = &eval.stages[t - 1];
            if t >= 2 {
                let h = bias_histogram(last, &run.layout, t)?;
                for (j, c) in h.counts.iter().enumerate() {
                    hist.push(vec![
                        seed.to_string(),
                        mode.to_string(),
                        t.to_string(),
                        (j + 1).to_string(),
                        c.to_string(),
                    ]);
                }
            }
            if mode == "arc" {
                push_otd(&mut otd, *seed, mode, &cfg.arc, t, &otd_validation(last, t));
            }
            push_records(&mut records, *seed, mode, t, last);
        }
    }

    let mut summary = Table::new(&[
        "mode",
        "seeds",
        "average_accuracy_mean",
        "average_accuracy_std",
        "forgetting_mean",
        "forgetting_std",
    ]);
    for (m, mode) in ["arc", "baseline"].into_iter().enumerate() {
        let (am, asd) = mean_std(&acc[m]);
        let (fm, fsd) = if fgt[m].is_empty() {
            (None, None)
        } else {
            let (a, b) = mean_std(&fgt[m]);
            (Some(a), b)
        };
        summary.push(vec![
            mode.to_string(),
            runs.len().to_string(),
            fmt_num(am),
            fmt_opt(asd),
            fmt_opt(fm),
            fmt_opt(fsd),
        ]);
    }

    let mut bundle = Bundle::default();
    bundle.add_table("metrics.csv", &metrics)?;
    bundle.add_table("summary.csv", &summary)?;
    bundle.add_table("r_matrix.csv", &r_table)?;
    bundle.add_table("bias_histogram.csv", &hist)?;
    bundle.add_table("otd_validation.csv", &otd)?;
    bundle.add_table("records.csv", &records)?;
    bundle.add_text(METADATA_FILE, metadata(cfg, Command::Run));
    Ok(bundle)
}

/// Independent per-task probes against the shared head, per seed, plus the
/// across-seed mean per (stage, task).
pub fn cmd_probe(cfg: &RunConfig) -> Result<Bundle, CliError> {
    let runs = per_seed(cfg, |seed, stream| {
        Ok(linear_probe_experiment(&stream, &cfg.train_for(seed))?)
    })?;
    let mut table = Table::new(&["seed", "stage", "task", "independent", "shared", "gap"]);
    let mut keys: Vec<(usize, usize)> = Vec::new();
    for (seed, rows) in &runs {
        for r in rows {
            table.push(vec![
                seed.to_string(),
                r.stage.to_string(),
                r.task.to_string(),
                fmt_num(r.independent),
                fmt_num(r.shared),
                fmt_num(r.independent - r.shared),
            ]);
            if !keys.contains(&(r.stage, r.task)) {
                keys.push((r.stage, r.task));
            }
        }
    }
    let mut summary = Table::new(&[
        "stage",
        "task",
        "seeds",
        "independent_mean",
        "shared_mean",
        "gap_mean",
    ]);
    for (stage, task) in keys {
        let picked: Vec<_> = runs
            .iter()
            .flat_map(|(_, rows)| rows.iter())
            .filter(|r| r.stage == stage && r.task == task)
            .collect();
        let mean = |f: &dyn Fn(&arc_core::ProbeRow) -> f64| {
            picked.iter().map(|r| f(r)).sum::<f64>() / picked.len() as f64
        };
        summary.push(vec![
            stage.to_string(),
            task.to_string(),
            picked.len().to_string(),
            fmt_num(mean(&|r| r.independent)),
            fmt_num(mean(&|r| r.shared)),
            fmt_num(mean(&|r| r.independent - r.shared)),
        ]);
    }
    let mut bundle = Bundle::default();
    bundle.add_table("probe.csv", &table)?;
    bundle.add_table("probe_summary.csv", &summary)?;
    bundle.add_text(METADATA_FILE, metadata(cfg, Command::Probe));
    Ok(bundle)
}

/// One row per (seed, variant) with the variant's ARC metrics; rows keep
/// seed order, then variant order.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<Bundle, CliError> {
    let variants: Vec<Variant> = cfg.ablate.variants();
    let runs = per_seed(cfg, |seed, stream| {
        Ok(ablation_grid(&stream, &cfg.train_for(seed), &cfg.arc, &variants)?)
    })?;
    let mut table = Table::new(&[
        "seed",
        "variant",
        "key",
        "loss",
        "temperature",
        "w_mode",
        "beta",
        "gamma",
        "average_accuracy",
        "forgetting",
    ]);
    let mut r_table = Table::new(&["seed", "variant", "stage", "task", "accuracy"]);
    for (seed, results) in &runs {
        for (v, res) in results.iter().enumerate() {
            let c = &res.config;
            table.push(vec![
                seed.to_string(),
                v.to_string(),
                res.key.clone(),
                c.loss.as_str().to_string(),
                if c.use_temperature { "on" } else { "off" }.to_string(),
                c.w_mode.as_str().to_string(),
                fmt_num(c.thresholds.beta),
                fmt_num(c.thresholds.gamma),
                fmt_num(res.report.average_accuracy),
                fmt_opt(res.report.forgetting),
            ]);
            push_r(&mut r_table, &[seed.to_string(), v.to_string()], &res.r);
        }
    }
    let mut bundle = Bundle::default();
    bundle.add_table("ablation.csv", &table)?;
    bundle.add_table("ablation_r_matrix.csv", &r_table)?;
    bundle.add_text(METADATA_FILE, metadata(cfg, Command::Ablate));
    Ok(bundle)
}

/// Detection statistics of the full ARC pipeline at the final stage for every
/// beta in `otd.betas`, on heads trained once per seed. `otd_summary.csv`
/// pools hits and flags over seeds.
pub fn cmd_validate_otd(cfg: &RunConfig) -> Result<Bundle, CliError> {
    let configs: Vec<ArcConfig> = cfg
        .otd_betas
        .iter()
        .map(|&beta| {
            Ok(ArcConfig {
                thresholds: Thresholds::new(beta, cfg.arc.thresholds.gamma)?,
                ..cfg.arc.clone()
            })
        })
        .collect::<Result<_, arc_core::Error>>()?;
    let runs = per_seed(cfg, |seed, stream| {
        let heads = train_stages(&stream, &cfg.train_for(seed))?;
        configs
            .iter()
            .map(|arc| {
                let eval = evaluate_stages(&stream, &heads, seed, arc)?;
                let t = eval.stages.len();
                let samples = eval.stages.into_iter().next_back().expect("one stage");
                let report = otd_validation(&samples, t);
                Ok((t, samples, report))
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;

    let mut table = Table::new(OTD_HEADER);
    let mut records = Table::new(RECORD_HEADER);
    for (seed, rows) in &runs {
        for (arc, (t, samples, report)) in configs.iter().zip(rows) {
            let mode = format!("beta={}", fmt_num(arc.thresholds.beta));
            push_otd(&mut table, *seed, &mode, arc, *t, report);
            push_records(&mut records, *seed, &mode, *t, samples);
        }
    }
    let mut summary = Table::new(&[
        "beta",
        "gamma",
        "seeds",
        "past_correct_flagged",
        "past_correct_hits",
        "past_misclassified_flagged",
        "past_misclassified_hits",
        "assumption1_precision",
        "assumption2_precision",
    ]);
    for (k, arc) in configs.iter().enumerate() {
        let mut sums = [0usize; 4];
        for (_, rows) in &runs {
            let r = &rows[k].2;
            sums[0] += r.past_correct_flagged;
            sums[1] += r.past_correct_hits;
            sums[2] += r.past_misclassified_flagged;
            sums[3] += r.past_misclassified_hits;
        }
        let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
        summary.push(vec![
            fmt_num(arc.thresholds.beta),
            fmt_num(arc.thresholds.gamma),
            runs.len().to_string(),
            sums[0].to_string(),
            sums[1].to_string(),
            sums[2].to_string(),
            sums[3].to_string(),
            fmt_opt(ratio(sums[1], sums[0])),
            fmt_opt(ratio(sums[3], sums[2])),
        ]);
    }
    let mut bundle = Bundle::default();
    bundle.add_table("otd_validation.csv", &table)?;
    bundle.add_table("otd_summary.csv", &summary)?;
    bundle.add_table("records.csv", &records)?;
    bundle.add_text(METADATA_FILE, metadata(cfg, Command::ValidateOtd));
    Ok(bundle)
}
