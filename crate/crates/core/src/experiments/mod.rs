//! The experiment harness: multi-seed runs, baselines, the ablation grid,
//! the (T, tau) hyperparameter sweep, the augmentation-policy study, and
//! report emission.
//!
//! Controlled comparisons share everything they legally can: each repeat
//! draws its dataset and training seed once, and every variant in an
//! ablation/sweep/policy row consumes those same draws, so dataset
//! checksums match across variants and differences are attributable to the
//! variant alone. Hyperparameter selection reads validation accuracy only;
//! test accuracy appears in final reports.

mod report;

pub use report::{
    emit_report, format_sig, round_sig, ReportFormat, ReportTable, ReportValue,
    REPORT_SCHEMA_VERSION,
};

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::StrongExtra;
use crate::data::{load_dataset, generate_synthetic_ssda, ShiftSpec, SsdaDataset};
use crate::error::{Error, Result};
use crate::seeding::{self, stream};
use crate::trainer::{fit, TrainConfig, TrainMethod};

/// One experiment: a dataset source, a method, a training recipe, and a
/// repeat count. Exactly one of `dataset_path` / `dataset_spec` must be set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset_path: Option<PathBuf>,
    pub dataset_spec: Option<ShiftSpec>,
    pub method: TrainMethod,
    pub train: TrainConfig,
    pub repeats: u32,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset_path: None,
            dataset_spec: None,
            method: TrainMethod::Con2da,
            train: TrainConfig::default(),
            repeats: 5,
            output_dir: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("config parse error: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    /// Collects every configuration problem before any run starts.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        match (&self.dataset_path, &self.dataset_spec) {
            (None, None) => problems.push("one of dataset_path / dataset_spec is required".to_string()),
            (Some(_), Some(_)) => {
                problems.push("dataset_path and dataset_spec are mutually exclusive".to_string())
            }
            _ => {}
        }
        if self.repeats < 1 {
            problems.push("repeats must be >= 1".to_string());
        }
        if let Err(e) = self.effective_train(0).validate() {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::config(problems.join("\n")))
        }
    }

    /// The training config a given repeat actually runs: the experiment's
    /// method is installed (forcing method-specific switches consistent)
    /// and the seed is split per repeat.
    pub fn effective_train(&self, repeat: u32) -> TrainConfig {
        let mut cfg = self.train.clone();
        cfg.method = self.method;
        if self.method != TrainMethod::Con2da {
            // The unsupervised switches only exist for the full method.
            cfg.disable_contrastive = true;
            cfg.disable_self_supervised = true;
        }
        cfg.seed = seeding::derive_seed(&[self.train.seed, stream::EXPERIMENT_REPEAT, repeat as u64]);
        cfg
    }

    /// The dataset a given repeat trains on. Inline specs re-draw splits per
    /// repeat; file datasets are fixed across repeats.
    pub fn dataset_for_repeat(&self, repeat: u32) -> Result<SsdaDataset> {
        match (&self.dataset_path, &self.dataset_spec) {
            (Some(path), None) => load_dataset(path),
            (None, Some(spec)) => {
                let mut spec = spec.clone();
                spec.seed = seeding::derive_seed(&[spec.seed, stream::DATASET_REPEAT, repeat as u64]);
                generate_synthetic_ssda(&spec, self.train.shots)
            }
            _ => Err(Error::config(
                "exactly one of dataset_path / dataset_spec must be set",
            )),
        }
    }
}

/// Outcome of one seed of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub repeat: u32,
    pub train_seed: u64,
    pub best_val_accuracy: f64,
    pub test_accuracy: f64,
    pub dataset_checksum: String,
}

/// Mean and spread across seeds for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub method: TrainMethod,
    pub repeats: u32,
    pub per_seed: Vec<SeedOutcome>,
    pub mean_val_accuracy: f64,
    pub mean_test_accuracy: f64,
    pub std_test_accuracy: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

fn median(xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite accuracies"));
    sorted[sorted.len() / 2]
}

/// Runs `repeats` seeds of one configuration against its datasets. Writes
/// per-seed metrics traces plus `summary.json` under the output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| Error::io(cfg.output_dir.display().to_string(), e))?;
    let summary = run_variant(cfg, &cfg.output_dir, true)?;
    emit_report(
        &summary_table(std::slice::from_ref(&summary), None),
        ReportFormat::Json,
        cfg.output_dir.join("summary.json"),
    )?;
    Ok(summary)
}

/// Shared inner loop: one configuration, all repeats.
fn run_variant(cfg: &ExperimentConfig, out_dir: &Path, write_metrics: bool) -> Result<ExperimentSummary> {
    let mut per_seed = Vec::with_capacity(cfg.repeats as usize);
    for r in 0..cfg.repeats {
        let dataset = cfg.dataset_for_repeat(r)?;
        let train = cfg.effective_train(r);
        log::info!(
            "run {:?} repeat {r}: seed {}, {} iterations",
            cfg.method,
            train.seed,
            train.total_iterations
        );
        let (_, report) = fit(&dataset, &train)?;
        if write_metrics {
            let seed_dir = out_dir.join(format!("seed_{r}"));
            fs::create_dir_all(&seed_dir).map_err(|e| Error::io(seed_dir.display().to_string(), e))?;
            report.write_metrics_csv(seed_dir.join("metrics.csv"))?;
        }
        per_seed.push(SeedOutcome {
            repeat: r,
            train_seed: train.seed,
            best_val_accuracy: report.best_validation_accuracy,
            test_accuracy: report.final_target_unlabeled_accuracy,
            dataset_checksum: dataset.checksum(),
        });
    }
    let vals: Vec<f64> = per_seed.iter().map(|s| s.best_val_accuracy).collect();
    let tests: Vec<f64> = per_seed.iter().map(|s| s.test_accuracy).collect();
    Ok(ExperimentSummary {
        method: cfg.method,
        repeats: cfg.repeats,
        per_seed,
        mean_val_accuracy: mean(&vals),
        mean_test_accuracy: mean(&tests),
        std_test_accuracy: sample_std(&tests),
    })
}

/// Median final target accuracy across seeds, the headline number of the
/// qualitative benchmark.
pub fn median_test_accuracy(summary: &ExperimentSummary) -> f64 {
    let tests: Vec<f64> = summary.per_seed.iter().map(|s| s.test_accuracy).collect();
    median(&tests)
}

fn summary_table(summaries: &[ExperimentSummary], label_override: Option<&[String]>) -> ReportTable {
    let mut table = ReportTable::new(&[
        "method",
        "repeat",
        "train_seed",
        "val_acc",
        "test_acc",
        "dataset_checksum",
    ]);
    for (i, s) in summaries.iter().enumerate() {
        let label = label_override
            .map(|ls| ls[i].clone())
            .unwrap_or_else(|| method_label(s.method).to_string());
        for seed in &s.per_seed {
            table.push_row(vec![
                ReportValue::Str(label.clone()),
                ReportValue::Int(seed.repeat as i64),
                ReportValue::Int(seed.train_seed as i64),
                ReportValue::Num(seed.best_val_accuracy),
                ReportValue::Num(seed.test_accuracy),
                ReportValue::Str(seed.dataset_checksum.clone()),
            ]);
        }
    }
    table
}

pub fn method_label(method: TrainMethod) -> &'static str {
    match method {
        TrainMethod::Con2da => "con2da",
        TrainMethod::SPlusT => "s_plus_t",
        TrainMethod::Ent => "ent",
    }
}

// ── Ablation ────────────────────────────────────────────────────────

/// The four ablation rows, in table order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub mean_val_accuracy: f64,
    pub mean_test_accuracy: f64,
    pub dataset_checksum: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationOutcome {
    pub rows: Vec<AblationRow>,
}

/// Runs the four training variants (w/o L_cont, w/o L_self, w cosine, full)
/// over identical datasets and seeds and emits `ablation.json` in the
/// output directory.
pub fn run_ablation(base: &ExperimentConfig) -> Result<AblationOutcome> {
    base.validate()?;
    if base.method != TrainMethod::Con2da {
        return Err(Error::config(format!(
            "ablation compares variants of the full method; got {:?}",
            base.method
        )));
    }
    fs::create_dir_all(&base.output_dir)
        .map_err(|e| Error::io(base.output_dir.display().to_string(), e))?;

    type Tweak = fn(&mut TrainConfig);
    let variants: [(&str, &str, Tweak); 4] = [
        ("w/o L_cont", "wo_l_cont", |c| c.disable_contrastive = true),
        ("w/o L_self", "wo_l_self", |c| c.disable_self_supervised = true),
        ("w cosine", "w_cosine", |c| c.cosine_classifier = true),
        ("Con²DA", "con2da", |_| {}),
    ];

    let mut rows = Vec::with_capacity(4);
    for (label, slug, tweak) in variants {
        let mut cfg = base.clone();
        tweak(&mut cfg.train);
        let variant_dir = base.output_dir.join(slug);
        fs::create_dir_all(&variant_dir)
            .map_err(|e| Error::io(variant_dir.display().to_string(), e))?;
        let summary = run_variant(&cfg, &variant_dir, true)?;
        let checksum = summary
            .per_seed
            .first()
            .map(|s| s.dataset_checksum.clone())
            .unwrap_or_default();
        rows.push(AblationRow {
            label: label.to_string(),
            mean_val_accuracy: summary.mean_val_accuracy,
            mean_test_accuracy: summary.mean_test_accuracy,
            dataset_checksum: checksum,
        });
    }

    let mut table = ReportTable::new(&["variant", "val_acc", "test_acc", "dataset_checksum"]);
    for row in &rows {
        table.push_row(vec![
            ReportValue::Str(row.label.clone()),
            ReportValue::Num(row.mean_val_accuracy),
            ReportValue::Num(row.mean_test_accuracy),
            ReportValue::Str(row.dataset_checksum.clone()),
        ]);
    }
    emit_report(&table, ReportFormat::Json, base.output_dir.join("ablation.json"))?;
    Ok(AblationOutcome { rows })
}

// ── Hyperparameter sweep ────────────────────────────────────────────

/// The sweep grids. Defaults are the standard 8 temperatures and 3
/// thresholds (24 cells).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub temperature_grid: Vec<f64>,
    pub threshold_grid: Vec<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            temperature_grid: vec![0.01, 0.05, 0.07, 0.1, 0.3, 0.5, 0.7, 0.9],
            threshold_grid: vec![0.8, 0.9, 0.95],
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.temperature_grid.is_empty() || self.threshold_grid.is_empty() {
            problems.push("sweep grids must be non-empty".to_string());
        }
        if self.temperature_grid.iter().any(|t| *t <= 0.0) {
            problems.push("temperatures must be positive".to_string());
        }
        if self.threshold_grid.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            problems.push("thresholds must lie in (0, 1]".to_string());
        }
        for (name, grid) in [
            ("temperature_grid", &self.temperature_grid),
            ("threshold_grid", &self.threshold_grid),
        ] {
            let mut sorted = grid.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
            sorted.dedup();
            if sorted.len() != grid.len() {
                problems.push(format!("{name} contains duplicate values"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::config(problems.join("\n")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub temperature: f64,
    pub threshold: f64,
    pub mean_val_accuracy: f64,
    pub mean_test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub cells: Vec<SweepCell>,
    /// Cell with the best mean validation accuracy; ties break toward the
    /// lower temperature, then the lower threshold.
    pub best: SweepCell,
}

/// Runs every (T, tau) cell over identical datasets/seeds and emits the
/// long-format grid (`sweep.json`) plus the selected cell
/// (`sweep_best.json`). Selection never reads test accuracy.
pub fn run_sweep(base: &ExperimentConfig, sweep: &SweepSpec) -> Result<SweepOutcome> {
    base.validate()?;
    sweep.validate()?;
    fs::create_dir_all(&base.output_dir)
        .map_err(|e| Error::io(base.output_dir.display().to_string(), e))?;

    let mut temperatures = sweep.temperature_grid.clone();
    temperatures.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
    let mut thresholds = sweep.threshold_grid.clone();
    thresholds.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));

    let mut cells = Vec::with_capacity(temperatures.len() * thresholds.len());
    for &t in &temperatures {
        for &tau in &thresholds {
            let mut cfg = base.clone();
            cfg.train.temperature = t;
            cfg.train.threshold = tau;
            let summary = run_variant(&cfg, &base.output_dir, false)?;
            cells.push(SweepCell {
                temperature: t,
                threshold: tau,
                mean_val_accuracy: summary.mean_val_accuracy,
                mean_test_accuracy: summary.mean_test_accuracy,
            });
        }
    }

    // Cells are in (T asc, tau asc) order; strict improvement keeps the
    // first (lowest T, lowest tau) of any tie.
    let best = cells
        .iter()
        .fold(None::<&SweepCell>, |acc, cell| match acc {
            Some(b) if cell.mean_val_accuracy <= b.mean_val_accuracy => Some(b),
            _ => Some(cell),
        })
        .expect("grid is non-empty")
        .clone();

    let mut table = ReportTable::new(&["temperature", "threshold", "val_acc", "test_acc"]);
    for c in &cells {
        table.push_row(vec![
            ReportValue::Num(c.temperature),
            ReportValue::Num(c.threshold),
            ReportValue::Num(c.mean_val_accuracy),
            ReportValue::Num(c.mean_test_accuracy),
        ]);
    }
    emit_report(&table, ReportFormat::Json, base.output_dir.join("sweep.json"))?;
    let mut best_table = ReportTable::new(&["temperature", "threshold", "val_acc", "test_acc"]);
    best_table.push_row(vec![
        ReportValue::Num(best.temperature),
        ReportValue::Num(best.threshold),
        ReportValue::Num(best.mean_val_accuracy),
        ReportValue::Num(best.mean_test_accuracy),
    ]);
    emit_report(&best_table, ReportFormat::Json, base.output_dir.join("sweep_best.json"))?;
    Ok(SweepOutcome { cells, best })
}

// ── Augmentation-policy study ───────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRow {
    pub label: String,
    pub strong_extras: BTreeSet<StrongExtra>,
    pub mean_val_accuracy: f64,
    pub mean_test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyStudyOutcome {
    pub rows: Vec<PolicyRow>,
}

/// Canonical label for a strong-extras set: `{}` is the weak-only baseline.
pub fn policy_label(set: &BTreeSet<StrongExtra>) -> String {
    let names: Vec<&str> = set.iter().map(|e| e.name()).collect();
    format!("{{{}}}", names.join(","))
}

/// Compares strong-augmentation policy sets under identical seeds/splits.
/// The empty set (both views drawn from the weak pipeline) is always
/// included; duplicate sets are dropped with a warning.
pub fn run_augmentation_study(
    base: &ExperimentConfig,
    policies: &[BTreeSet<StrongExtra>],
) -> Result<PolicyStudyOutcome> {
    base.validate()?;
    fs::create_dir_all(&base.output_dir)
        .map_err(|e| Error::io(base.output_dir.display().to_string(), e))?;

    let mut unique: Vec<BTreeSet<StrongExtra>> = vec![BTreeSet::new()];
    for p in policies {
        if unique.contains(p) {
            log::warn!("duplicate augmentation policy {} dropped", policy_label(p));
        } else {
            unique.push(p.clone());
        }
    }

    let mut rows = Vec::with_capacity(unique.len());
    for set in &unique {
        let mut cfg = base.clone();
        cfg.train.augment.strong_extras = set.clone();
        let summary = run_variant(&cfg, &base.output_dir, false)?;
        rows.push(PolicyRow {
            label: policy_label(set),
            strong_extras: set.clone(),
            mean_val_accuracy: summary.mean_val_accuracy,
            mean_test_accuracy: summary.mean_test_accuracy,
        });
    }

    let mut table = ReportTable::new(&["policy", "val_acc", "test_acc"]);
    for row in &rows {
        table.push_row(vec![
            ReportValue::Str(row.label.clone()),
            ReportValue::Num(row.mean_val_accuracy),
            ReportValue::Num(row.mean_test_accuracy),
        ]);
    }
    emit_report(&table, ReportFormat::Json, base.output_dir.join("policies.json"))?;
    Ok(PolicyStudyOutcome { rows })
}

// ── Report conversion ───────────────────────────────────────────────

/// Re-emits every schema-versioned JSON table found directly in `dir` in
/// the requested format (next to the original, `.csv` or `.json`).
/// Returns the paths written.
pub fn convert_reports(dir: impl AsRef<Path>, format: ReportFormat) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut names: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    names.sort();

    let mut written = Vec::new();
    for path in names {
        let text = fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let Ok(table) = ReportTable::from_json(&text) else {
            continue; // not a report table
        };
        let out = match format {
            ReportFormat::Csv => path.with_extension("csv"),
            ReportFormat::Json => path.clone(),
        };
        emit_report(&table, format, &out)?;
        written.push(out);
    }
    if written.is_empty() {
        return Err(Error::contract(format!(
            "no report tables found in {}",
            dir.display()
        )));
    }
    Ok(written)
}
