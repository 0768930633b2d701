//! Command-line driver: `generate` synthetic case tables, `search` the
//! (alpha, ell) grid under a trial budget, `run` the repeated evaluation
//! with report emission, and `report` to re-emit tables from a saved
//! report. Identical inputs and seeds produce byte-identical output
//! directories.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use obsfeat::analysis::{build_report, emit_report, load_expert_csv, EvaluationReport, ExpertRanking};
use obsfeat::dataset::{load_dataset, load_schema, synthesize, Dataset, SynthesisSpec};
use obsfeat::error::{Error, Result};
use obsfeat::evaluate::{
    default_alpha_grid, hyperparameter_search, repeated_evaluation, PipelineConfig,
};
use obsfeat::manifest::RunManifest;
use obsfeat::preprocess::CorrelationMode;

#[derive(Parser)]
#[command(
    name = "obsfeat",
    version,
    about = "Correlation-filtered PCA + decision-tree pipeline for obsolescence case tables"
)]
struct Cli {
    /// Worker threads for trial execution (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a dataset CSV + schema from a generator spec.
    Generate(GenerateArgs),
    /// Grid-search (alpha, ell) under a total trial budget.
    Search(SearchArgs),
    /// Repeated shuffled evaluation, hold-out scoring, and report emission.
    Run(RunArgs),
    /// Re-emit tables from an existing report.json.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Generator spec (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Output directory for dataset.csv, schema.json, manifest.json.
    #[arg(long)]
    out: PathBuf,
    /// Override the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Absolute,
    Signed,
}

impl From<ModeArg> for CorrelationMode {
    fn from(m: ModeArg) -> CorrelationMode {
        match m {
            ModeArg::Absolute => CorrelationMode::Absolute,
            ModeArg::Signed => CorrelationMode::Signed,
        }
    }
}

/// Pipeline settings shared by `search` and `run`: a JSON config file plus
/// individual flag overrides (flags win).
#[derive(Args)]
struct ConfigArgs {
    /// Pipeline config file (JSON); missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Correlation threshold in [-1, 1].
    #[arg(long)]
    alpha: Option<f64>,
    /// Principal components kept.
    #[arg(long)]
    ell: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Held-out rows per trial.
    #[arg(long)]
    test_count: Option<usize>,
    /// How pairwise correlation is thresholded.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Fit normalization/elimination on the full dataset before splitting,
    /// letting held-out rows influence the fitted statistics, instead of on
    /// the training rows only.
    #[arg(long)]
    normalize_before_split: bool,
    /// Scale features to unit variance before the projection stage.
    #[arg(long)]
    standardize_pca: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
                serde_json::from_str::<PipelineConfig>(&text)
                    .map_err(|e| Error::Json { path: path.to_path_buf(), source: e })?
            }
            None => PipelineConfig::default(),
        };
        if let Some(alpha) = self.alpha {
            config.alpha = alpha;
        }
        if let Some(ell) = self.ell {
            config.ell = ell;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(test_count) = self.test_count {
            config.test_count = test_count;
        }
        if let Some(mode) = self.mode {
            config.correlation_mode = mode.into();
        }
        if self.normalize_before_split {
            config.normalize_before_split = true;
        }
        if self.standardize_pca {
            config.standardize_before_pca = true;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct DataArgs {
    /// Dataset CSV.
    #[arg(long)]
    data: PathBuf,
    /// Schema JSON (default: schema.json next to the dataset).
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Drop constant feature columns before the pipeline runs.
    #[arg(long)]
    drop_constant: bool,
}

impl DataArgs {
    fn schema_path(&self) -> PathBuf {
        self.schema
            .clone()
            .unwrap_or_else(|| self.data.parent().unwrap_or(Path::new(".")).join("schema.json"))
    }

    fn load(&self) -> Result<Dataset> {
        let schema = load_schema(&self.schema_path())?;
        let ds = load_dataset(&self.data, &schema)?;
        if self.drop_constant {
            let (kept, dropped) = ds.drop_constant_columns()?;
            for name in &dropped {
                println!("dropped constant column: {name}");
            }
            Ok(kept)
        } else {
            Ok(ds)
        }
    }
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory for leaderboard.json, best_config.json,
    /// manifest.json.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated alpha grid (default: -1.0 to 1.0 step 0.05).
    #[arg(long, value_delimiter = ',')]
    alpha_grid: Option<Vec<f64>>,
    /// Comma-separated ell grid (default: every 1..=h per alpha).
    #[arg(long, value_delimiter = ',')]
    ell_grid: Option<Vec<usize>>,
    /// Exact trials per grid point instead of splitting the budget.
    #[arg(long)]
    trials_per_config: Option<usize>,
    /// Total trial budget.
    #[arg(long, default_value_t = 500)]
    budget: usize,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory for report.json and the CSV tables.
    #[arg(long)]
    out: PathBuf,
    /// Number of shuffled evaluation trials.
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Expert ranking CSV (feature,rank) to compare against.
    #[arg(long)]
    expert: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// An existing report.json.
    #[arg(long)]
    report: PathBuf,
    /// Output directory for the re-emitted tables.
    #[arg(long)]
    out: PathBuf,
}

fn create_out_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::Io { path: out.to_path_buf(), source: e })
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Json { path: path.to_path_buf(), source: e })?;
    std::fs::write(path, text + "\n")
        .map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn obsolete_partition(ds: &Dataset) -> Result<(Dataset, Option<Dataset>)> {
    let (o_view, u_view) = ds.partition();
    if o_view.is_empty() {
        return Err(Error::EmptyDataset("dataset has no obsolete rows to train on".into()));
    }
    let o = o_view.materialize();
    let u = if u_view.is_empty() { None } else { Some(u_view.materialize()) };
    Ok((o, u))
}

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.spec)
        .map_err(|e| Error::Io { path: args.spec.clone(), source: e })?;
    let mut spec: SynthesisSpec = serde_json::from_str(&text)
        .map_err(|e| Error::Json { path: args.spec.clone(), source: e })?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let ds = synthesize(&spec)?;
    create_out_dir(&args.out)?;
    ds.write_csv(&args.out.join("dataset.csv"))?;
    ds.write_schema(&args.out.join("schema.json"))?;

    let mut manifest = RunManifest::new(
        "generate",
        spec.seed,
        serde_json::to_value(&spec).map_err(|e| Error::Json { path: "spec".into(), source: e })?,
    );
    manifest.add_input(&args.spec)?;
    manifest.write(&args.out)?;

    println!(
        "generated {} rows ({} obsolete, {} hold-out), {} features -> {}",
        ds.n_rows(),
        ds.obsolete.iter().filter(|&&o| o).count(),
        ds.obsolete.iter().filter(|&&o| !o).count(),
        ds.n_features(),
        args.out.display()
    );
    Ok(())
}

fn cmd_search(args: &SearchArgs) -> Result<()> {
    let base = args.config.resolve()?;
    let ds = args.data.load()?;
    let (o, _) = obsolete_partition(&ds)?;

    let alpha_grid = args.alpha_grid.clone().unwrap_or_else(default_alpha_grid);
    let ell_grid = args.ell_grid.clone().unwrap_or_default();
    let (best, leaderboard) = hyperparameter_search(
        &o,
        &base,
        &alpha_grid,
        &ell_grid,
        args.trials_per_config,
        args.budget,
        base.seed,
    )?;

    create_out_dir(&args.out)?;
    write_json(&leaderboard, &args.out.join("leaderboard.json"))?;
    write_json(&best, &args.out.join("best_config.json"))?;
    let mut manifest = RunManifest::new(
        "search",
        base.seed,
        serde_json::json!({
            "pipeline": base,
            "alpha_grid": alpha_grid,
            "ell_grid": ell_grid,
            "trials_per_config": args.trials_per_config,
            "budget": args.budget,
        }),
    );
    manifest.add_input(&args.data.data)?;
    manifest.add_input(&args.data.schema_path())?;
    if let Some(cfg) = &args.config.config {
        manifest.add_input(cfg)?;
    }
    manifest.write(&args.out)?;

    let total: usize = leaderboard.iter().map(|e| e.n_trials).sum();
    println!("evaluated {} grid points with {} trials total", leaderboard.len(), total);
    println!(
        "best: alpha {} ell {} (h {}) mean accuracy {:.4} over {} trials",
        best.alpha,
        best.ell,
        leaderboard[0].h,
        leaderboard[0].mean_accuracy,
        leaderboard[0].n_trials
    );
    for entry in leaderboard.iter().take(5) {
        println!(
            "  alpha {:>5} ell {:>2} h {:>2} mean {:.4} min {:.4} max {:.4} trials {}",
            entry.alpha,
            entry.ell,
            entry.h,
            entry.mean_accuracy,
            entry.min_accuracy,
            entry.max_accuracy,
            entry.n_trials
        );
    }
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let ds = args.data.load()?;
    let (o, u) = obsolete_partition(&ds)?;
    let expert: Option<ExpertRanking> = match &args.expert {
        Some(path) => Some(load_expert_csv(path)?),
        None => None,
    };

    let (trials, stats) = repeated_evaluation(&o, &config, args.trials, config.seed)?;

    let mut manifest = RunManifest::new(
        "run",
        config.seed,
        serde_json::json!({ "pipeline": config, "trials": args.trials }),
    );
    manifest.add_input(&args.data.data)?;
    manifest.add_input(&args.data.schema_path())?;
    if let Some(cfg) = &args.config.config {
        manifest.add_input(cfg)?;
    }
    if let Some(expert_path) = &args.expert {
        manifest.add_input(expert_path)?;
    }

    let report = build_report(&o, u.as_ref(), &trials, &stats, expert.as_ref(), manifest, None)?;
    create_out_dir(&args.out)?;
    emit_report(&report, &report.standard_rankings(), &args.out)?;
    report.manifest.write(&args.out)?;

    println!(
        "{} trials: min {:.4} max {:.4} std {:.4} arithmetic mean {:.4} geometric mean {:.4}",
        stats.n_trials, stats.min, stats.max, stats.std, stats.arithmetic_mean, stats.geometric_mean
    );
    println!(
        "best trial (seed {}): held-out accuracy {:.4}",
        report.best_trial.seed, report.best_trial.test_accuracy
    );
    if let Some(u_acc) = report.best_trial_nonobsolete_accuracy {
        println!("best trial on the non-obsolete hold-out: {u_acc:.4}");
    }
    if let Some(green) = &report.best_on_nonobsolete {
        println!(
            "best-on-hold-out trial (seed {}): hold-out {:.4}, obsolete test {:.4}",
            green.seed, green.nonobsolete_accuracy, green.obsolete_accuracy
        );
    }
    if let Some(block) = &report.expert {
        println!(
            "expert agreement: mean ranking {:.4}, best model {:.4}",
            block.agreement_with_mean, block.agreement_with_best
        );
    }
    println!("report written to {}", args.out.display());
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.report)
        .map_err(|e| Error::Io { path: args.report.clone(), source: e })?;
    let report: EvaluationReport = serde_json::from_str(&text)
        .map_err(|e| Error::Json { path: args.report.clone(), source: e })?;
    create_out_dir(&args.out)?;
    emit_report(&report, &report.standard_rankings(), &args.out)?;
    println!("tables re-emitted to {}", args.out.display());
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: could not size the worker pool: {e}");
            std::process::exit(2);
        }
    }
    let result = match &cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Search(args) => cmd_search(args),
        Command::Run(args) => cmd_run(args),
        Command::Report(args) => cmd_report(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
