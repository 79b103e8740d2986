use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qd_core::envs::{build_env, Evaluator};
use qd_core::harness::{
    emit_heatmap_csv, emit_heatmap_svg, emit_histogram, mean_elite_robustness, parse_config,
    run_experiment, write_atomic,
};
use qd_core::rng::{streams, RngStream};
use qd_core::{Archive, GridSpec, QdError};

#[derive(Parser)]
#[command(name = "qd", about = "Quality-diversity optimization harness", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file.
    Run(RunArgs),
    /// Render archive files (heatmap, histogram).
    Plot(PlotArgs),
    /// Recompute the QD score of a stored archive under a revised minimum.
    Rescore(RescoreArgs),
    /// Re-evaluate every elite and report mean elite robustness.
    Robustness(RobustnessArgs),
    /// Random-search baseline: evaluate N random solutions, report the best.
    RandomSearch(RandomSearchArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides run.seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides run.threads from the config.
    #[arg(long)]
    threads: Option<usize>,
    /// Forces deterministic mode (single-threaded evaluation).
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args)]
struct GridArgs {
    /// Cells per measure dimension.
    #[arg(long, value_delimiter = ',', default_values_t = [32usize, 32])]
    dims: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0f64, 0.0], allow_negative_numbers = true)]
    lower: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [1.0f64, 1.0])]
    upper: Vec<f64>,
}

impl GridArgs {
    fn load(&self, archive: &Path) -> Result<Archive, QdError> {
        let spec = GridSpec::new(self.dims.clone(), self.lower.clone(), self.upper.clone())?;
        Archive::load_csv_path(spec, archive)
    }
}

#[derive(Args)]
struct EnvArgs {
    /// Environment id: lp_sphere or gait_point.
    #[arg(long)]
    env: String,
    /// lp_sphere solution dimension.
    #[arg(long, default_value_t = 20)]
    solution_dim: usize,
    /// gait_point policy hidden layer sizes.
    #[arg(long, value_delimiter = ',', default_values_t = [32usize, 32])]
    policy_hidden: Vec<usize>,
    /// gait_point observation noise std.
    #[arg(long, default_value_t = 0.0)]
    noise_std: f64,
}

impl EnvArgs {
    fn build(&self) -> Result<Box<dyn Evaluator>, QdError> {
        build_env(
            &self.env,
            self.solution_dim,
            &self.policy_hidden,
            self.noise_std,
        )
    }
}

#[derive(Args)]
struct PlotArgs {
    #[command(subcommand)]
    kind: PlotKind,
}

#[derive(Subcommand)]
enum PlotKind {
    /// Dense objective matrix as CSV plus a colored SVG.
    Heatmap {
        #[arg(long)]
        archive: PathBuf,
        /// Output path; `.svg` is written as SVG, anything else as CSV.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        min_objective: f64,
        #[arg(long, default_value_t = 100.0, allow_negative_numbers = true)]
        max_objective: f64,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Objective-value histogram as (bin lower edge, count) CSV.
    Histogram {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        bins: usize,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        min_objective: f64,
        #[arg(long, default_value_t = 100.0, allow_negative_numbers = true)]
        max_objective: f64,
        /// Extension beyond the maximum objective.
        #[arg(long, default_value_t = 400.0, allow_negative_numbers = true)]
        margin: f64,
        #[command(flatten)]
        grid: GridArgs,
    },
}

#[derive(Args)]
struct RescoreArgs {
    #[arg(long)]
    archive: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    min_objective: f64,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args)]
struct RobustnessArgs {
    #[arg(long)]
    archive: PathBuf,
    #[command(flatten)]
    env: EnvArgs,
    #[arg(long, default_value_t = 10)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args)]
struct RandomSearchArgs {
    #[command(flatten)]
    env: EnvArgs,
    #[arg(long, default_value_t = 10_000)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), QdError> {
    match cli.command {
        Command::Run(args) => run(args),
        Command::Plot(args) => plot(args),
        Command::Rescore(args) => {
            let archive = args.grid.load(&args.archive)?;
            println!(
                "qd_score = {}",
                archive.qd_score(args.min_objective)?
            );
            println!("coverage = {}", archive.coverage());
            println!("best_performance = {}", archive.best_performance()?);
            Ok(())
        }
        Command::Robustness(args) => {
            let archive = args.grid.load(&args.archive)?;
            let evaluator = args.env.build()?;
            let mut rng = RngStream::new(args.seed, streams::ROBUSTNESS);
            let value = mean_elite_robustness(&archive, evaluator.as_ref(), args.episodes, &mut rng)?;
            println!("mean_elite_robustness = {value}");
            Ok(())
        }
        Command::RandomSearch(args) => random_search(args),
    }
}

fn run(args: RunArgs) -> Result<(), QdError> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    if let Some(threads) = args.threads {
        cfg.run.threads = threads;
    }
    if args.deterministic {
        cfg.run.deterministic = true;
    }
    let trials = cfg.run.trials;
    let base_seed = cfg.run.seed;
    for trial in 0..trials {
        let mut trial_cfg = cfg.clone();
        trial_cfg.run.seed = base_seed + trial as u64;
        let dir = if trials == 1 {
            args.out.clone()
        } else {
            args.out.join(format!("trial_{trial:03}"))
        };
        let result = run_experiment(&trial_cfg, Some(&dir))?;
        println!(
            "{} on {} seed {}: qd_score {:.4}, coverage {:.4}, best {:.4}, {} evaluations -> {}",
            trial_cfg.algorithm.id(),
            trial_cfg.env.id(),
            trial_cfg.run.seed,
            result.summary.qd_score,
            result.summary.coverage,
            result.summary.best_performance,
            result.summary.evaluations,
            dir.display()
        );
    }
    Ok(())
}

fn plot(args: PlotArgs) -> Result<(), QdError> {
    match args.kind {
        PlotKind::Heatmap {
            archive,
            out,
            min_objective,
            max_objective,
            grid,
        } => {
            let archive = grid.load(&archive)?;
            let svg = out.extension().is_some_and(|e| e == "svg");
            write_atomic(&out, |w| {
                if svg {
                    emit_heatmap_svg(&archive, min_objective, max_objective, w)
                } else {
                    emit_heatmap_csv(&archive, w)
                }
            })?;
            println!("wrote {}", out.display());
            Ok(())
        }
        PlotKind::Histogram {
            archive,
            out,
            bins,
            min_objective,
            max_objective,
            margin,
            grid,
        } => {
            let archive = grid.load(&archive)?;
            write_atomic(&out, |w| {
                emit_histogram(&archive, bins, min_objective, max_objective, margin, w)
            })?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn random_search(args: RandomSearchArgs) -> Result<(), QdError> {
    let evaluator = args.env.build()?;
    let mut init_rng = RngStream::new(args.seed, streams::INIT);
    let mut best = f64::NEG_INFINITY;
    for i in 0..args.count {
        let solution = evaluator.random_initial(&mut init_rng);
        let mut eval_rng = RngStream::new(args.seed, streams::EVAL_BASE + i as u64);
        let evaluation = evaluator.evaluate(&solution, &mut eval_rng)?;
        if evaluation.objective > best {
            best = evaluation.objective;
        }
    }
    println!("best_return = {best}");
    Ok(())
}
