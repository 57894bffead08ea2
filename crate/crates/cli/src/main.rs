use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cric::data::{load_csv, write_csv};
use cric::experiment::{emit_results, evaluate, run_experiment, EvalOptions, ExperimentConfig};
use cric::learners::{train, Method, TrainConfig};
use cric::ratio::{ratio_diagnostics, ClassifierConfig, RatioMode, RatioModel};
use cric::sem::{even_sizes, generate_sem, SemConfig, Setting};
use cric::{CricError, Result};

#[derive(Parser)]
#[command(name = "cric", version, about = "Covariate-shift representation invariance criterion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the structural-equation benchmark to CSV.
    Generate(GenerateArgs),
    /// Fit ERM, IRMv1 or V-REx on a CSV dataset and save the predictor.
    Train(TrainArgs),
    /// Fit likelihood ratios on a CSV dataset and report weight diagnostics.
    RatioCheck(RatioCheckArgs),
    /// Compute the criterion of a saved predictor against a saved baseline.
    Eval(EvalArgs),
    /// Run the replicated benchmark and write results to a directory.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct Columns {
    /// Environment column name.
    #[arg(long, default_value = "env")]
    env_col: String,
    /// Target column name.
    #[arg(long, default_value = "y")]
    target_col: String,
}

#[derive(Args)]
struct RatioArgs {
    #[arg(long, default_value = "classifier", value_parser = parse_ratio_mode)]
    ratio_mode: RatioMode,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value = "FOU")]
    setting: Setting,
    /// Comma-separated environment scales.
    #[arg(long, value_delimiter = ',', default_value = "0.2,2,5")]
    env_scales: Vec<f64>,
    /// Total sample size, split evenly over environments.
    #[arg(long, default_value_t = 1300)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    dim_x1: usize,
    #[arg(long, default_value_t = 5)]
    dim_x2: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    columns: Columns,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    method: String,
    /// TrainConfig JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Hold the intercept at zero.
    #[arg(long)]
    no_intercept: bool,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    columns: Columns,
}

#[derive(Args)]
struct RatioCheckArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    ratio: RatioArgs,
    /// Write JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    columns: Columns,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    predictor: PathBuf,
    #[arg(long)]
    baseline: PathBuf,
    #[command(flatten)]
    ratio: RatioArgs,
    #[arg(long)]
    normalize_weights: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    columns: Columns,
}

#[derive(Args)]
struct ExperimentArgs {
    /// ExperimentConfig JSON; defaults are used for missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides `base_seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_ratio_mode)]
    ratio_mode: Option<RatioMode>,
    #[arg(long)]
    normalize_weights: bool,
    /// Penalty weight for IRMv1 and V-REx.
    #[arg(long)]
    lambda: Option<f64>,
    /// Epoch cap for every method.
    #[arg(long)]
    epochs: Option<usize>,
}

fn parse_ratio_mode(s: &str) -> std::result::Result<RatioMode, String> {
    s.parse().map_err(|e: CricError| e.to_string())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn generate(args: GenerateArgs) -> Result<()> {
    let k = args.env_scales.len();
    let cfg = SemConfig::with_dims(
        args.setting,
        args.env_scales,
        even_sizes(args.n, k),
        args.dim_x1,
        args.dim_x2,
        args.seed,
    )?;
    let data = generate_sem(&cfg)?;
    write_csv(&data, &args.out, &args.columns.env_col, &args.columns.target_col)
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let method: Method = args.method.parse()?;
    let mut cfg: TrainConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => TrainConfig::default(),
    };
    if let Some(l) = args.lambda {
        cfg.lambda = l;
    }
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.no_intercept {
        cfg.fit_intercept = false;
    }
    let data = load_csv(&args.data, &args.columns.env_col, &args.columns.target_col)?;
    let outcome = train(method, &data, &cfg)?;
    if !outcome.converged && !outcome.stalled {
        eprintln!(
            "warning: epoch cap reached after {} iterations (loss {})",
            outcome.iterations, outcome.loss
        );
    }
    write_json(&outcome.predictor, Some(&args.out))
}

fn ratio_check(args: RatioCheckArgs) -> Result<()> {
    let data = load_csv(&args.data, &args.columns.env_col, &args.columns.target_col)?;
    let model = RatioModel::fit(&data, args.ratio.ratio_mode, &ClassifierConfig::default())?;
    write_json(&ratio_diagnostics(&model, &data)?, args.out.as_deref())
}

fn eval(args: EvalArgs) -> Result<()> {
    let opts = EvalOptions {
        env_column: args.columns.env_col,
        target_column: args.columns.target_col,
        ratio_mode: args.ratio.ratio_mode,
        classifier: ClassifierConfig::default(),
        weight_normalized: args.normalize_weights,
    };
    let report = evaluate(&args.data, &args.predictor, &args.baseline, &opts)?;
    write_json(&report, args.out.as_deref())
}

fn experiment(args: ExperimentArgs) -> Result<()> {
    let mut cfg: ExperimentConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.base_seed = s;
    }
    if let Some(m) = args.ratio_mode {
        cfg.ratio_mode = m;
    }
    if args.normalize_weights {
        cfg.weight_normalized = true;
    }
    if let Some(l) = args.lambda {
        cfg.train_cfg.irmv1.lambda = l;
        cfg.train_cfg.vrex.lambda = l;
    }
    if let Some(e) = args.epochs {
        for m in [Method::Erm, Method::Irmv1, Method::Vrex] {
            cfg.train_cfg.get_mut(m).epochs = e;
        }
    }
    let result = run_experiment(&cfg)?;
    fs::create_dir_all(&args.out)?;
    emit_results(&result, &args.out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train_cmd(a),
        Command::RatioCheck(a) => ratio_check(a),
        Command::Eval(a) => eval(a),
        Command::Experiment(a) => experiment(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
