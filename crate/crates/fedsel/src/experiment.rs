//! Experiment harness: flat-file configs, paired multi-seed selector
//! comparisons, and the deterministic output files they produce.
//!
//! A run directory looks like
//!
//! ```text
//! out/
//!   summary.csv                  one row per (selector, seed)
//!   random/seed-1/rounds.jsonl   per-round accuracy, loss, reward
//!   random/seed-1/clusters.jsonl cluster structure, when the selector has any
//!   random/seed-1/summary.csv    that run's row alone
//!   ...
//! ```
//!
//! Every byte of these files is a pure function of the config: reruns
//! produce identical files, parallel or not.

use crate::data::{load_preset, Dataset};
use crate::error::{Error, Result};
use crate::fed::{
    partition_noniid, ClusterRecord, Engine, FedConfig, PartitionConfig, RoundRecord,
};
use crate::metrics::MetricsReport;
use crate::nn::{self, LayerSpec};
use crate::seeding::{channel, mix};
use crate::selectors::{build_selector, RlConfig, SelectorKind};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    /// Dense relu net over flattened features; `hidden` lists the hidden
    /// layer widths.
    Dense { hidden: Vec<usize> },
    /// The small convolution stack; needs channel-major image data.
    Conv,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset: String,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub n_clients: usize,
    pub sigma: f64,
    /// Partition identity. The effective shard split also folds in the run
    /// seed, so every seed sees a fresh partition while selectors compared
    /// under the same seed share it exactly.
    pub partition_seed: u64,
    pub clients_per_round: usize,
    pub local_epochs: usize,
    pub local_lr: f64,
    pub local_batch: usize,
    /// None falls back to the dataset preset's conventional target.
    pub target_accuracy: Option<f64>,
    pub max_rounds: usize,
    pub model: ModelKind,
    pub selectors: Vec<SelectorKind>,
    pub seeds: Vec<u64>,
    pub rl: RlConfig,
    pub stop_at_target: bool,
    pub parallel: bool,
    pub reg_lambda: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: "synth-blobs".into(),
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
            n_clients: 20,
            sigma: 0.0,
            partition_seed: 1,
            clients_per_round: 4,
            local_epochs: 1,
            local_lr: 0.05,
            local_batch: 32,
            target_accuracy: None,
            max_rounds: 100,
            model: ModelKind::Dense { hidden: vec![64] },
            selectors: vec![SelectorKind::Random],
            seeds: vec![1, 2, 3],
            rl: RlConfig::default(),
            stop_at_target: true,
            parallel: false,
            reg_lambda: 0.0,
        }
    }
}

fn parse_as<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value '{value}' for {key}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_as(key, s))
        .collect()
}

/// Parses the flat `key = value` config format. `#` starts a comment,
/// blank lines are skipped, list values are comma-separated. Unknown keys
/// are errors: a typo should fail loudly, not silently fall back to a
/// default.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected key = value", lineno + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "dataset" => cfg.dataset = value.to_string(),
            "data_dir" => cfg.data_dir = PathBuf::from(value),
            "out_dir" => cfg.out_dir = PathBuf::from(value),
            "n_clients" => cfg.n_clients = parse_as(key, value)?,
            "sigma" => cfg.sigma = parse_as(key, value)?,
            "partition_seed" => cfg.partition_seed = parse_as(key, value)?,
            "clients_per_round" => cfg.clients_per_round = parse_as(key, value)?,
            "local_epochs" => cfg.local_epochs = parse_as(key, value)?,
            "local_lr" => cfg.local_lr = parse_as(key, value)?,
            "local_batch" => cfg.local_batch = parse_as(key, value)?,
            "target_accuracy" => cfg.target_accuracy = Some(parse_as(key, value)?),
            "max_rounds" => cfg.max_rounds = parse_as(key, value)?,
            "model" => {
                cfg.model = match value {
                    "dense" => ModelKind::Dense {
                        hidden: match &cfg.model {
                            ModelKind::Dense { hidden } => hidden.clone(),
                            _ => vec![64],
                        },
                    },
                    "conv" => ModelKind::Conv,
                    other => {
                        return Err(Error::Config(format!(
                            "unknown model '{other}' (expected dense or conv)"
                        )))
                    }
                }
            }
            "hidden" => {
                let hidden = parse_list(key, value)?;
                match &mut cfg.model {
                    ModelKind::Dense { hidden: h } => *h = hidden,
                    // `hidden` before `model = dense` should still stick.
                    ModelKind::Conv => cfg.model = ModelKind::Dense { hidden },
                }
            }
            "selectors" => {
                cfg.selectors = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            "seeds" => cfg.seeds = parse_list(key, value)?,
            "gamma" => cfg.rl.gamma = parse_as(key, value)?,
            "epsilon_start" => cfg.rl.epsilon_start = parse_as(key, value)?,
            "epsilon_end" => cfg.rl.epsilon_end = parse_as(key, value)?,
            "epsilon_decay_rounds" => cfg.rl.epsilon_decay_rounds = parse_as(key, value)?,
            "sync_interval" => cfg.rl.sync_interval = parse_as(key, value)?,
            "replay_capacity" => cfg.rl.replay_capacity = parse_as(key, value)?,
            "replay_batch" => cfg.rl.replay_batch = parse_as(key, value)?,
            "q_lr" => cfg.rl.q_lr = parse_as(key, value)?,
            "ensemble_size" => cfg.rl.ensemble_size = parse_as(key, value)?,
            "k_clusters" => cfg.rl.k_clusters = parse_as(key, value)?,
            "bandwidth" => cfg.rl.bandwidth = parse_as(key, value)?,
            "q_hidden" => cfg.rl.q_hidden = parse_list(key, value)?,
            "stop_at_target" => cfg.stop_at_target = parse_as(key, value)?,
            "parallel" => cfg.parallel = parse_as(key, value)?,
            "reg_lambda" => cfg.reg_lambda = parse_as(key, value)?,
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
    }
    validate(&cfg)?;
    Ok(cfg)
}

pub fn parse_config_file(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&fs::read_to_string(path)?)
}

fn validate(cfg: &ExperimentConfig) -> Result<()> {
    let bad = |msg: String| Err(Error::Config(msg));
    if cfg.n_clients == 0 {
        return bad("n_clients must be positive".into());
    }
    if cfg.clients_per_round == 0 || cfg.clients_per_round > cfg.n_clients {
        return bad(format!(
            "clients_per_round = {} with n_clients = {}",
            cfg.clients_per_round, cfg.n_clients
        ));
    }
    if !(0.0..=1.0).contains(&cfg.sigma) {
        return bad(format!("sigma = {} outside [0, 1]", cfg.sigma));
    }
    if cfg.max_rounds == 0 {
        return bad("max_rounds must be positive".into());
    }
    if cfg.local_batch == 0 {
        return bad("local_batch must be positive".into());
    }
    if cfg.seeds.is_empty() {
        return bad("seeds must not be empty".into());
    }
    if cfg.selectors.is_empty() {
        return bad("selectors must not be empty".into());
    }
    for (name, eps) in [
        ("epsilon_start", cfg.rl.epsilon_start),
        ("epsilon_end", cfg.rl.epsilon_end),
    ] {
        if !(0.0..=1.0).contains(&eps) {
            return bad(format!("{name} = {eps} outside [0, 1]"));
        }
    }
    if cfg.rl.replay_batch == 0 || cfg.rl.replay_batch > cfg.rl.replay_capacity {
        return bad(format!(
            "replay_batch = {} with replay_capacity = {}",
            cfg.rl.replay_batch, cfg.rl.replay_capacity
        ));
    }
    if cfg.rl.ensemble_size == 0 {
        return bad("ensemble_size must be positive".into());
    }
    Ok(())
}

/// Builds the model spec the config asks for against the dataset's shape.
pub fn model_spec(model: &ModelKind, ds: &Dataset) -> Result<Vec<LayerSpec>> {
    match model {
        ModelKind::Dense { hidden } => {
            let mut dims = vec![ds.feature_len()];
            dims.extend_from_slice(hidden);
            dims.push(ds.num_classes);
            Ok(nn::dense_net(&dims))
        }
        ModelKind::Conv => {
            let shape = ds.feature_shape();
            if shape.len() != 3 {
                return Err(Error::Config(format!(
                    "conv model needs channel-major image data, got feature shape {shape:?}"
                )));
            }
            Ok(nn::conv_stack((shape[1], shape[2]), shape[0], ds.num_classes))
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub selector: SelectorKind,
    pub seed: u64,
    pub records: Vec<RoundRecord>,
    pub clusters: Vec<ClusterRecord>,
    pub report: MetricsReport,
    pub rounds_to_target: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct SelectorSummary {
    pub selector: SelectorKind,
    /// Median rounds to target over seeds; runs that never got there count
    /// as `max_rounds + 1`.
    pub median_rounds: f64,
    pub hits: usize,
    pub runs: usize,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub dataset: String,
    pub sigma: f64,
    pub target_accuracy: f64,
    pub max_rounds: usize,
    pub runs: Vec<RunResult>,
    pub by_selector: Vec<SelectorSummary>,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Runs the full selector-by-seed grid. Selectors compared under the same
/// seed share the partition and the initial model, so differences in their
/// round counts come from selection alone. `on_run` fires after each run,
/// for progress reporting.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    mut on_run: impl FnMut(&RunResult),
) -> Result<ExperimentOutcome> {
    validate(cfg)?;
    let data = load_preset(&cfg.dataset, &cfg.data_dir)?;
    let target = cfg.target_accuracy.unwrap_or(data.target_accuracy);
    let spec = model_spec(&cfg.model, &data.train)?;
    let mut runs = Vec::new();
    for &kind in &cfg.selectors {
        for &seed in &cfg.seeds {
            let shards = partition_noniid(
                &data.train,
                &PartitionConfig {
                    n_clients: cfg.n_clients,
                    sigma: cfg.sigma,
                    seed: mix(&[channel::PARTITION, cfg.partition_seed, seed]),
                },
            )?;
            let mut engine = Engine::new(
                spec.clone(),
                shards,
                data.test.clone(),
                FedConfig {
                    clients_per_round: cfg.clients_per_round,
                    local_epochs: cfg.local_epochs,
                    local_lr: cfg.local_lr,
                    local_batch: cfg.local_batch,
                    target_accuracy: target,
                    max_rounds: cfg.max_rounds,
                    reg_lambda: cfg.reg_lambda,
                    stop_at_target: cfg.stop_at_target,
                    parallel: cfg.parallel,
                },
                seed,
            )?;
            let mut selector = build_selector(kind, &cfg.rl, seed);
            engine.run(selector.as_mut())?;
            let result = RunResult {
                selector: kind,
                seed,
                rounds_to_target: engine.rounds_to_target(),
                report: engine.final_metrics()?,
                records: std::mem::take(&mut engine.records),
                clusters: std::mem::take(&mut engine.cluster_records),
            };
            on_run(&result);
            runs.push(result);
        }
    }

    let by_selector = cfg
        .selectors
        .iter()
        .map(|&kind| {
            let mine: Vec<&RunResult> = runs.iter().filter(|r| r.selector == kind).collect();
            let capped: Vec<f64> = mine
                .iter()
                .map(|r| r.rounds_to_target.unwrap_or(cfg.max_rounds + 1) as f64)
                .collect();
            SelectorSummary {
                selector: kind,
                median_rounds: median(capped),
                hits: mine.iter().filter(|r| r.rounds_to_target.is_some()).count(),
                runs: mine.len(),
                mean_accuracy: mine.iter().map(|r| r.report.accuracy).sum::<f64>()
                    / mine.len() as f64,
            }
        })
        .collect();

    Ok(ExperimentOutcome {
        dataset: cfg.dataset.clone(),
        sigma: cfg.sigma,
        target_accuracy: target,
        max_rounds: cfg.max_rounds,
        runs,
        by_selector,
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    run_experiment_with(cfg, |_| {})
}

/// One summary.csv row.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub dataset: String,
    pub sigma: f64,
    pub selector: String,
    pub seed: u64,
    pub rounds_to_target: Option<usize>,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub recall: f64,
    pub kappa: f64,
    pub auc: f64,
    pub runtime_s: f64,
}

pub const SUMMARY_HEADER: &str =
    "dataset,sigma,selector,seed,rounds_to_target,accuracy,balanced_accuracy,recall,kappa,auc,runtime_s";

pub fn summary_rows(outcome: &ExperimentOutcome) -> Vec<SummaryRow> {
    outcome
        .runs
        .iter()
        .map(|r| SummaryRow {
            dataset: outcome.dataset.clone(),
            sigma: outcome.sigma,
            selector: r.selector.as_str().to_string(),
            seed: r.seed,
            rounds_to_target: r.rounds_to_target,
            accuracy: r.report.accuracy,
            balanced_accuracy: r.report.balanced_accuracy,
            recall: r.report.recall,
            kappa: r.report.kappa,
            auc: r.report.auc,
            runtime_s: r.report.runtime_seconds,
        })
        .collect()
}

fn format_row(row: &SummaryRow) -> String {
    let rounds = row
        .rounds_to_target
        .map(|r| r.to_string())
        .unwrap_or_default();
    format!(
        "{},{},{},{},{rounds},{},{},{},{},{},{}",
        row.dataset,
        row.sigma,
        row.selector,
        row.seed,
        row.accuracy,
        row.balanced_accuracy,
        row.recall,
        row.kappa,
        row.auc,
        row.runtime_s
    )
}

fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{SUMMARY_HEADER}")?;
    for row in rows {
        writeln!(w, "{}", format_row(row))?;
    }
    w.flush()?;
    Ok(())
}

fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for item in items {
        writeln!(w, "{}", serde_json::to_string(item)?)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the run directory tree described in the module docs.
pub fn emit_outputs(outcome: &ExperimentOutcome, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let rows = summary_rows(outcome);
    write_summary_csv(&out_dir.join("summary.csv"), &rows)?;
    for (run, row) in outcome.runs.iter().zip(&rows) {
        let dir = out_dir
            .join(run.selector.as_str())
            .join(format!("seed-{}", run.seed));
        fs::create_dir_all(&dir)?;
        write_jsonl(&dir.join("rounds.jsonl"), &run.records)?;
        write_jsonl(&dir.join("clusters.jsonl"), &run.clusters)?;
        write_summary_csv(&dir.join("summary.csv"), std::slice::from_ref(row))?;
    }
    Ok(())
}

fn parse_csv_field<T: std::str::FromStr>(path: &Path, line: usize, what: &str, s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Format {
        path: path.display().to_string(),
        offset: line as u64,
        detail: format!("bad {what} '{s}'"),
    })
}

/// Reads a summary.csv back. The header must match what `emit_outputs`
/// writes; `offset` in errors is a line number here.
pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == SUMMARY_HEADER => {}
        other => {
            return Err(Error::Format {
                path: path.display().to_string(),
                offset: 0,
                detail: format!("unexpected header {:?}", other.map(|(_, h)| h)),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(Error::Format {
                path: path.display().to_string(),
                offset: (i + 1) as u64,
                detail: format!("expected 11 fields, got {}", f.len()),
            });
        }
        rows.push(SummaryRow {
            dataset: f[0].to_string(),
            sigma: parse_csv_field(path, i + 1, "sigma", f[1])?,
            selector: f[2].to_string(),
            seed: parse_csv_field(path, i + 1, "seed", f[3])?,
            rounds_to_target: if f[4].is_empty() {
                None
            } else {
                Some(parse_csv_field(path, i + 1, "rounds_to_target", f[4])?)
            },
            accuracy: parse_csv_field(path, i + 1, "accuracy", f[5])?,
            balanced_accuracy: parse_csv_field(path, i + 1, "balanced_accuracy", f[6])?,
            recall: parse_csv_field(path, i + 1, "recall", f[7])?,
            kappa: parse_csv_field(path, i + 1, "kappa", f[8])?,
            auc: parse_csv_field(path, i + 1, "auc", f[9])?,
            runtime_s: parse_csv_field(path, i + 1, "runtime_s", f[10])?,
        });
    }
    Ok(rows)
}

/// Renders rows as a per-selector aggregate table, followed by a
/// rounds-to-target comparison against the random baseline when one is
/// present. Medians here are over runs that reached the target; the hit
/// count tells the rest of the story.
pub fn render_report(rows: &[SummaryRow]) -> String {
    let mut selectors: Vec<String> = Vec::new();
    for row in rows {
        if !selectors.contains(&row.selector) {
            selectors.push(row.selector.clone());
        }
    }
    let mut out = String::new();
    out.push_str(&format!(
        "{:<12} {:>4} {:>4} {:>13} {:>9} {:>9} {:>9} {:>10}\n",
        "selector", "runs", "hits", "median_rounds", "accuracy", "kappa", "auc", "runtime_s"
    ));
    let mut hit_medians: Vec<(String, f64)> = Vec::new();
    for sel in &selectors {
        let mine: Vec<&SummaryRow> = rows.iter().filter(|r| &r.selector == sel).collect();
        let hits: Vec<f64> = mine
            .iter()
            .filter_map(|r| r.rounds_to_target.map(|x| x as f64))
            .collect();
        let med = if hits.is_empty() {
            "-".to_string()
        } else {
            let m = median(hits.clone());
            hit_medians.push((sel.clone(), m));
            format!("{m}")
        };
        let mean = |f: fn(&SummaryRow) -> f64| {
            mine.iter().map(|r| f(r)).sum::<f64>() / mine.len() as f64
        };
        out.push_str(&format!(
            "{:<12} {:>4} {:>4} {:>13} {:>9.4} {:>9.4} {:>9.4} {:>10.2}\n",
            sel,
            mine.len(),
            hits.len(),
            med,
            mean(|r| r.accuracy),
            mean(|r| r.kappa),
            mean(|r| r.auc),
            mean(|r| r.runtime_s),
        ));
    }
    if let Some((_, base)) = hit_medians.iter().find(|(s, _)| s == "random") {
        for (sel, med) in &hit_medians {
            if sel != "random" && *base > 0.0 {
                let delta = 100.0 * (base - med) / base;
                out.push_str(&format!(
                    "{sel}: median rounds to target {med} vs random {base} ({delta:+.1}% fewer rounds)\n"
                ));
            }
        }
    }
    out
}
