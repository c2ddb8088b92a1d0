// `!(x > 0.0)` is the NaN-rejecting form of parameter checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod report;
mod units;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::Failure;
use config::{CommandKind, ExperimentConfig};
use report::{write_atomically, Report, Timing, SCHEMA_VERSION};

#[derive(Parser)]
#[command(name = "holoreg", version, about = "Spin-ensemble quantum register simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Continuum and discrete overlap tables plus the register Gram matrix.
    Overlap(RunArgs),
    /// Run a register program on the exact, register or classical engine.
    Simulate(RunArgs),
    /// Scaling sweep with a log-log fit.
    Sweep(RunArgs),
    /// Check a config or an emitted report.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Structured,
    /// Structured report plus flat `.tsv` tables.
    Tabular,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Directory for `report.json`; the report goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for parallel shots.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, value_enum, default_value = "structured")]
    format: Format,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ValidateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    ExperimentConfig::parse(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn run(kind: CommandKind, args: &RunArgs) -> Result<(), Failure> {
    let mut cfg = load_config(&args.config)?;
    if cfg.command != kind {
        return Err(Failure::Config(format!(
            "config is written for `{}`, not `{}`",
            cfg.command.name(),
            kind.name()
        )));
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.format == Format::Tabular && args.out.is_none() {
        return Err(Failure::Config("--format tabular needs --out".into()));
    }
    if let Some(jobs) = args.jobs {
        if jobs == 0 {
            return Err(Failure::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::Config(e.to_string()))?;
    }

    let start = Instant::now();
    let (results, diagnostics) = commands::run(&cfg)?;
    let report = Report {
        schema_version: SCHEMA_VERSION,
        command: kind,
        config: cfg,
        results,
        diagnostics,
        timing: Timing {
            wall_seconds: start.elapsed().as_secs_f64(),
        },
    };
    let summary = report.summary();
    match &args.out {
        None => {
            print!("{}", report.to_json());
            eprintln!("{summary}");
        }
        Some(dir) => {
            let mut files = vec![("report.json", report.to_json())];
            if args.format == Format::Tabular {
                files.extend(report.tables());
            }
            write_atomically(dir, &files)
                .map_err(|e| Failure::Simulation(format!("writing {}: {e}", dir.display())))?;
            println!("{summary}");
        }
    }
    Ok(())
}

fn validate(args: &ValidateArgs) -> Result<(), Failure> {
    if let Some(path) = &args.config {
        let cfg = load_config(path)?;
        println!("{}: valid `{}` config", path.display(), cfg.command.name());
    }
    if let Some(path) = &args.report {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        Report::validate_json(&text)
            .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        println!("{}: valid schema {SCHEMA_VERSION} report", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Overlap(a) => run(CommandKind::Overlap, a),
        Command::Simulate(a) => run(CommandKind::Simulate, a),
        Command::Sweep(a) => run(CommandKind::Sweep, a),
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
