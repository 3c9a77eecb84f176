//! Experiment CLI: dataset generation, training runs, the ablation grid,
//! the hyperparameter sweep, the augmentation study, and report conversion.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime failure.
//! `C2DA_LOG` in {quiet, info, debug} controls verbosity (default info).

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use con2da_core::augment::StrongExtra;
use con2da_core::data::{generate_synthetic_ssda, save_dataset, GeneratorKind, ShiftKind, ShiftSpec};
use con2da_core::experiments::{
    convert_reports, method_label, run_ablation, run_augmentation_study, run_experiment, run_sweep,
    ExperimentConfig, ReportFormat, SweepSpec,
};
use con2da_core::Error;

#[derive(Parser)]
#[command(name = "con2da", about = "Semi-supervised domain adaptation laboratory", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic domain-shift dataset file.
    GenData(GenDataArgs),
    /// Train one configuration across its repeat seeds.
    Train(TrainArgs),
    /// Run the four-variant ablation grid.
    Ablation(ConfigOutArgs),
    /// Run the (temperature, threshold) hyperparameter sweep.
    Sweep(SweepArgs),
    /// Compare strong-augmentation policy sets.
    AugStudy(AugStudyArgs),
    /// Re-emit report tables from a run directory as CSV or JSON.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GeneratorArg {
    TwoMoons,
    GaussianBlobs,
    TexturedGrid,
}

impl From<GeneratorArg> for GeneratorKind {
    fn from(v: GeneratorArg) -> Self {
        match v {
            GeneratorArg::TwoMoons => GeneratorKind::TwoMoons,
            GeneratorArg::GaussianBlobs => GeneratorKind::GaussianBlobs,
            GeneratorArg::TexturedGrid => GeneratorKind::TexturedGrid,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ShiftKindArg {
    Rotation,
    Translation,
    ChannelSwap,
    Noise,
}

impl From<ShiftKindArg> for ShiftKind {
    fn from(v: ShiftKindArg) -> Self {
        match v {
            ShiftKindArg::Rotation => ShiftKind::Rotation,
            ShiftKindArg::Translation => ShiftKind::Translation,
            ShiftKindArg::ChannelSwap => ShiftKind::ChannelSwap,
            ShiftKindArg::Noise => ShiftKind::Noise,
        }
    }
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, value_enum, default_value = "textured-grid")]
    generator: GeneratorArg,
    #[arg(long, default_value_t = 5)]
    classes: u32,
    #[arg(long, default_value_t = 300)]
    samples_per_domain: u32,
    #[arg(long, value_enum, default_value = "rotation")]
    shift_kind: ShiftKindArg,
    #[arg(long, default_value_t = 25.0)]
    shift_magnitude: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Labeled target samples per class (1 or 3).
    #[arg(long, default_value_t = 3)]
    shots: u32,
    /// Destination dataset file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's base training seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConfigOutArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated temperature grid (defaults to the standard 8 values).
    #[arg(long)]
    t_grid: Option<String>,
    /// Comma-separated threshold grid (defaults to {0.8, 0.9, 0.95}).
    #[arg(long)]
    tau_grid: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AugStudyArgs {
    #[arg(long)]
    config: PathBuf,
    /// Policy sets as comma-joined extras, e.g. "rand_augment" or
    /// "color_jitter,cutout"; an empty string is the weak-only baseline.
    #[arg(long, num_args = 0.., value_delimiter = ' ')]
    policies: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory holding report tables.
    #[arg(long = "in")]
    input: PathBuf,
    /// csv or json.
    #[arg(long)]
    format: String,
}

fn init_logging() {
    let level = match std::env::var("C2DA_LOG").ok().as_deref() {
        Some("quiet") => log::LevelFilter::Error,
        Some("debug") => log::LevelFilter::Debug,
        Some("info") | None => log::LevelFilter::Info,
        Some(other) => {
            eprintln!("warning: unknown C2DA_LOG value {other:?}; using info");
            log::LevelFilter::Info
        }
    };
    env_logger::Builder::new().filter_level(level).init();
}

fn parse_grid(text: &str) -> Result<Vec<f64>, Error> {
    text.split(',')
        .map(|cell| {
            cell.trim()
                .parse::<f64>()
                .map_err(|e| Error::config(format!("bad grid value {cell:?}: {e}")))
        })
        .collect()
}

fn parse_policy(text: &str) -> Result<BTreeSet<StrongExtra>, Error> {
    let mut set = BTreeSet::new();
    for name in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let extra = match name {
            "color_jitter" => StrongExtra::ColorJitter,
            "random_grayscale" => StrongExtra::RandomGrayscale,
            "cutout" => StrongExtra::Cutout,
            "rand_augment" => StrongExtra::RandAugment,
            other => {
                return Err(Error::config(format!(
                    "unknown strong extra {other:?}; expected color_jitter, random_grayscale, cutout, or rand_augment"
                )))
            }
        };
        set.insert(extra);
    }
    Ok(set)
}

fn load_config(path: &PathBuf, out: Option<&PathBuf>) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(out) = out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn run() -> Result<(), Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenData(args) => {
            let spec = ShiftSpec {
                generator: args.generator.into(),
                num_classes: args.classes,
                samples_per_domain: args.samples_per_domain,
                shift_kind: args.shift_kind.into(),
                shift_magnitude: args.shift_magnitude,
                seed: args.seed,
            };
            let dataset = generate_synthetic_ssda(&spec, args.shots)?;
            save_dataset(&dataset, &args.out)?;
            println!(
                "wrote {} (K={}, source={}, target labeled={}, unlabeled={}, validation={})",
                args.out.display(),
                dataset.num_classes(),
                dataset.source_labeled().len(),
                dataset.target_labeled().len(),
                dataset.target_unlabeled().len(),
                dataset.target_validation().len(),
            );
        }
        Command::Train(args) => {
            let mut cfg = load_config(&args.config, args.out.as_ref())?;
            if let Some(seed) = args.seed {
                cfg.train.seed = seed;
            }
            let summary = run_experiment(&cfg)?;
            println!(
                "{}: test accuracy {:.4} +/- {:.4} over {} seeds (val {:.4})",
                method_label(summary.method),
                summary.mean_test_accuracy,
                summary.std_test_accuracy,
                summary.repeats,
                summary.mean_val_accuracy,
            );
        }
        Command::Ablation(args) => {
            let cfg = load_config(&args.config, Some(&args.out))?;
            let outcome = run_ablation(&cfg)?;
            for row in &outcome.rows {
                println!(
                    "{:<12} val {:.4}  test {:.4}",
                    row.label, row.mean_val_accuracy, row.mean_test_accuracy
                );
            }
        }
        Command::Sweep(args) => {
            let cfg = load_config(&args.config, Some(&args.out))?;
            let mut sweep = SweepSpec::default();
            if let Some(grid) = args.t_grid.as_deref() {
                sweep.temperature_grid = parse_grid(grid)?;
            }
            if let Some(grid) = args.tau_grid.as_deref() {
                sweep.threshold_grid = parse_grid(grid)?;
            }
            let outcome = run_sweep(&cfg, &sweep)?;
            println!(
                "{} cells; best T={} tau={} (val {:.4}, test {:.4})",
                outcome.cells.len(),
                outcome.best.temperature,
                outcome.best.threshold,
                outcome.best.mean_val_accuracy,
                outcome.best.mean_test_accuracy,
            );
        }
        Command::AugStudy(args) => {
            let cfg = load_config(&args.config, Some(&args.out))?;
            let policies: Vec<BTreeSet<StrongExtra>> = args
                .policies
                .iter()
                .map(|p| parse_policy(p))
                .collect::<Result<_, _>>()?;
            let outcome = run_augmentation_study(&cfg, &policies)?;
            for row in &outcome.rows {
                println!(
                    "{:<40} val {:.4}  test {:.4}",
                    row.label, row.mean_val_accuracy, row.mean_test_accuracy
                );
            }
        }
        Command::Report(args) => {
            let format = ReportFormat::from_str(&args.format)?;
            let written = convert_reports(&args.input, format)?;
            for path in written {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    init_logging();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
