use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use lrma::experiment::{load_ratings, write_series, ExperimentConfig, ModelSettings, Pipeline};
use lrma::io::{write_model, SavedModel};
use lrma::{run_experiment, svt_complete, LrmaError, RatingFormat, RatingScale, Result, SvtConfig};

#[derive(Parser)]
#[command(
    name = "lrma",
    version,
    about = "Global and local low-rank matrix approximation"
)]
struct Cli {
    /// Worker threads for anchor-parallel training (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep ranks and anchor counts; write the RMSE series as CSV.
    Experiment(Box<ExperimentArgs>),
    /// Fit a global or local model on all ratings and save it.
    Fit(FitArgs),
    /// Nuclear-norm completion of a small matrix.
    Complete(CompleteArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// File of `key = value` lines using the long flag names.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<String>,
    /// movielens-dat, tsv or csv.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    test_fraction: Option<String>,
    /// Comma-separated ranks.
    #[arg(long)]
    ranks: Option<String>,
    /// Comma-separated anchor counts.
    #[arg(long)]
    anchors: Option<String>,
    #[arg(long)]
    h1: Option<String>,
    #[arg(long)]
    h2: Option<String>,
    /// epanechnikov, epanechnikov-scaled or uniform.
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    /// als, sgd or svt.
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    distance_rank: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    max_epochs: Option<String>,
    #[arg(long)]
    tolerance: Option<String>,
    #[arg(long)]
    learning_rate: Option<String>,
    /// Output CSV (stdout if omitted).
    #[arg(long)]
    out: Option<String>,
}

impl ExperimentArgs {
    fn overrides(&self) -> [(&'static str, &Option<String>); 16] {
        [
            ("input", &self.input),
            ("format", &self.format),
            ("test-fraction", &self.test_fraction),
            ("ranks", &self.ranks),
            ("anchors", &self.anchors),
            ("h1", &self.h1),
            ("h2", &self.h2),
            ("kernel", &self.kernel),
            ("lambda", &self.lambda),
            ("solver", &self.solver),
            ("distance-rank", &self.distance_rank),
            ("seed", &self.seed),
            ("max-epochs", &self.max_epochs),
            ("tolerance", &self.tolerance),
            ("learning-rate", &self.learning_rate),
            ("out", &self.out),
        ]
    }

    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::new("");
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| {
                LrmaError::InvalidArgument(format!("cannot read config {}: {e}", path.display()))
            })?;
            cfg.apply_key_values(&text)?;
        }
        for (key, value) in self.overrides() {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if cfg.input.as_os_str().is_empty() {
            return Err(LrmaError::InvalidArgument("--input is required".into()));
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "movielens-dat")]
    format: RatingFormat,
    #[arg(long, default_value_t = 5)]
    rank: usize,
    /// Number of local models; omit to fit a single global model.
    #[arg(long)]
    anchors: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    lambda: f64,
    #[arg(long, default_value_t = 0.8)]
    h1: f64,
    #[arg(long, default_value_t = 0.8)]
    h2: f64,
    #[arg(long, default_value_t = 10)]
    distance_rank: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompleteArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "csv")]
    format: RatingFormat,
    /// Lower end of the rating scale.
    #[arg(long, default_value_t = f64::MIN)]
    min: f64,
    /// Upper end of the rating scale.
    #[arg(long, default_value_t = f64::MAX)]
    max: f64,
    /// Nuclear-norm penalty (data-scaled default if omitted).
    #[arg(long)]
    tau: Option<f64>,
    /// Feasibility radius for the residual (data-scaled default if omitted).
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    /// Completed matrix as CSV.
    #[arg(long)]
    out: PathBuf,
    /// JSON-lines run report (stdout if omitted).
    #[arg(long)]
    report: Option<PathBuf>,
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn experiment(args: &ExperimentArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let rows = run_experiment(&cfg)?;
    let mut w = output(cfg.output.as_ref())?;
    write_series(&mut w, &rows)?;
    w.flush()?;
    Ok(())
}

fn fit(args: &FitArgs) -> Result<()> {
    let data = load_ratings(&args.input, args.format, RatingScale::MOVIELENS)?;
    let mut settings = ModelSettings {
        lambda: args.lambda,
        distance_rank: args.distance_rank,
        seed: args.seed,
        ..Default::default()
    };
    settings.kernel.h1 = args.h1;
    settings.kernel.h2 = args.h2;
    let pipeline = Pipeline::new(&data, settings)?;
    let model = match args.anchors {
        None => SavedModel::Global(pipeline.global(args.rank)?),
        Some(q) => SavedModel::Local(pipeline.local_models(args.rank, q)?),
    };
    write_model(
        BufWriter::new(File::create(&args.out)?),
        data.scale(),
        &model,
    )?;
    info!("model written to {}", args.out.display());
    Ok(())
}

fn complete(args: &CompleteArgs) -> Result<()> {
    let scale = RatingScale::new(args.min, args.max, args.min.max(0.0).min(args.max))?;
    let data = load_ratings(&args.input, args.format, scale)?;
    let mut cfg = SvtConfig::for_observed(&data);
    cfg.tau = args.tau.unwrap_or(cfg.tau);
    cfg.alpha = args.alpha.unwrap_or(cfg.alpha);
    cfg.step = args.step.unwrap_or(cfg.step);
    cfg.max_iters = args.max_iters.unwrap_or(cfg.max_iters);
    cfg.tolerance = args.tolerance.unwrap_or(cfg.tolerance);
    let report = svt_complete(&data, &cfg)?;

    let mut w = BufWriter::new(File::create(&args.out)?);
    for i in 0..report.x.nrows() {
        let row: Vec<String> = report.x.row(i).iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;

    let mut r = output(args.report.as_ref())?;
    for (k, obj) in report.objective.iter().enumerate() {
        writeln!(
            r,
            "{}",
            serde_json::json!({ "iteration": k + 1, "objective": obj })
        )?;
    }
    let summary = serde_json::json!({
        "iterations": report.iterations,
        "residual": report.residual,
        "nuclear_norm": report.nuclear_norm,
        "converged": report.converged,
        "feasible": report.feasible,
        "tau": cfg.tau,
        "alpha": cfg.alpha,
    });
    writeln!(r, "{summary}")?;
    r.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Experiment(a) => experiment(a),
        Command::Fit(a) => fit(a),
        Command::Complete(a) => complete(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
