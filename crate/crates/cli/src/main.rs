use std::path::PathBuf;
use std::process::ExitCode;

use aoi_cli::commands::{self, load_spec, RunRequest, SolveRequest};
use aoi_cli::experiment::{Overrides, DEFAULT_TABLE_BOUND, DEFAULT_TOLERANCE, RECIPES};
use aoi_cli::runner::TableSource;
use aoi_cli::CliError;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "aoi",
    version,
    about = "Age-of-information scheduling for wireless broadcast networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve truncated MDPs and write policy artifacts.
    Solve(SolveArgs),
    /// Simulate schedulers over a grid of arrival rates.
    Run(RunArgs),
    /// Run the property suite.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Experiment TOML; every structural_mdp and buffered_mdp table it uses is solved.
    #[arg(long, conflicts_with = "probs")]
    config: Option<PathBuf>,
    /// Arrival probabilities, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    probs: Option<Vec<f64>>,
    /// Truncation bound; must exceed the number of users.
    #[arg(long)]
    m: Option<usize>,
    /// Span tolerance for relative value iteration.
    #[arg(long)]
    tol: Option<f64>,
    /// Solve the buffered base-station model.
    #[arg(long)]
    buffered: bool,
    #[arg(long, default_value_t = 100_000)]
    max_iterations: usize,
    /// Artifact root directory.
    #[arg(long, default_value = "artifacts")]
    out: PathBuf,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    /// Built-in experiment.
    #[arg(long, conflicts_with_all = ["config", "probs"])]
    recipe: Option<String>,
    /// Experiment TOML, or a run manifest.json to replay.
    #[arg(long, conflicts_with = "probs")]
    config: Option<PathBuf>,
    /// Arrival probabilities for a single-cell run, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    probs: Option<Vec<f64>>,
    /// Schedulers, comma separated. Selects the schedulers of a single-cell
    /// run (default `index`) or filters those of a recipe or config.
    #[arg(long, value_delimiter = ',')]
    policy: Option<Vec<String>>,
    /// Output directory; defaults to results/<name>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Artifact root holding solved policy tables.
    #[arg(long, default_value = "artifacts")]
    artifacts: PathBuf,
    /// Solve policy tables in memory instead of loading artifacts.
    #[arg(long)]
    solve: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    warmup: Option<u64>,
    #[arg(long)]
    replications: Option<u64>,
    /// Truncation bound for table and online MDP schedulers.
    #[arg(long)]
    m: Option<usize>,
    /// Online MDP step-size scale `a` in `a / t`.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    /// Run single-cell schedulers on the buffered network.
    #[arg(long)]
    buffered: bool,
    #[arg(long, default_value_t = 100_000)]
    max_iterations: usize,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Only run checks whose `module/name` contains this text.
    #[arg(long)]
    filter: Option<String>,
    #[arg(long)]
    jobs: Option<usize>,
}

fn with_jobs<T>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError>
where
    T: Send,
{
    match jobs {
        None => Ok(f()),
        Some(0) => Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(CliError::runtime),
    }
}

fn solve(args: SolveArgs) -> Result<(), CliError> {
    let req = match (&args.config, args.probs) {
        (Some(path), None) => {
            let (mut spec, _) = load_spec(path)?;
            spec.apply(&Overrides {
                m: args.m,
                tol: args.tol,
                ..Overrides::default()
            });
            SolveRequest::from_spec(&spec, args.out, args.max_iterations)?
        }
        (None, Some(probs)) => SolveRequest::single(
            probs,
            args.m.unwrap_or(DEFAULT_TABLE_BOUND),
            args.tol.unwrap_or(DEFAULT_TOLERANCE),
            args.buffered,
            args.max_iterations,
            args.out,
        )?,
        _ => return Err(CliError::Usage("give either --config or --probs".into())),
    };
    for line in with_jobs(args.jobs, || commands::solve(&req))?? {
        println!("{line}");
    }
    Ok(())
}

fn run(mut args: RunArgs) -> Result<(), CliError> {
    let overrides = Overrides {
        horizon: args.horizon,
        seed: args.seed,
        warmup: args.warmup,
        replications: args.replications,
        m: args.m,
        gamma: args.gamma,
        tol: args.tol,
    };
    let tables = if args.solve {
        TableSource::Solve {
            max_iterations: args.max_iterations,
        }
    } else {
        TableSource::Load(args.artifacts.clone())
    };
    let mut req = if let Some(name) = &args.recipe {
        RunRequest::recipe(name, &overrides, args.max_iterations, args.out)?
    } else if let Some(path) = &args.config {
        let (mut spec, replay) = load_spec(path)?;
        spec.apply(&overrides);
        let tables = match replay {
            Some(m) if m.solve_inline => TableSource::Solve {
                max_iterations: args.max_iterations,
            },
            Some(m) if !args.solve => TableSource::Load(m.artifacts.unwrap_or(args.artifacts)),
            _ => tables,
        };
        RunRequest {
            out: args.out.unwrap_or_else(|| PathBuf::from("results").join(&spec.name)),
            source: format!("config {}", path.display()),
            spec,
            tables,
        }
    } else if let Some(probs) = args.probs {
        let policies = args.policy.take().unwrap_or_else(|| vec!["index".into()]);
        RunRequest::adhoc(probs, &policies, args.buffered, &overrides, tables, args.out)?
    } else {
        return Err(CliError::Usage(format!(
            "give --recipe ({}), --config or --probs",
            RECIPES.join(", ")
        )));
    };
    if let Some(names) = &args.policy {
        req.spec.retain_kinds(names)?;
    }
    let report = with_jobs(args.jobs, || commands::run(&req))??;
    print!("{}", report.summary);
    println!("wrote {}", req.out.display());
    if report.manifest.failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "{} of {} cells failed",
            report.manifest.failures.len(),
            report.manifest.failures.len() + report.manifest.rows
        )))
    }
}

fn verify(args: VerifyArgs) -> Result<(), CliError> {
    let results = with_jobs(args.jobs, || commands::verify(args.seed, args.filter.as_deref()))?;
    let (text, status) = commands::verify_report(&results);
    print!("{text}");
    status
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Run(a) => run(a),
        Command::Verify(a) => verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
