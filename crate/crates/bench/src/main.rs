use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use heston_bench::experiments::{self, PriceRow};
use heston_bench::report::{emit, Format};
use heston_bench::{reproduce, BenchError, ExperimentConfig, ExperimentKind, Overrides};
use heston_core::QuadratureRule;

/// Heston Monte Carlo simulation, pricing and benchmark runner.
#[derive(Debug, Parser)]
#[command(name = "heston", version)]
struct Cli {
    /// Experiment config (TOML, or JSON with a .json extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// First seed; further seeds follow consecutively.
    #[arg(long, global = true, env = "HESTON_SEED")]
    seed: Option<u64>,
    #[arg(long, global = true)]
    particles: Option<usize>,
    /// Substeps per period.
    #[arg(long, global = true)]
    substeps: Option<usize>,
    /// trapezoidal, simpson13 or simpson38.
    #[arg(long, global = true)]
    rule: Option<String>,
    /// Variance floor for the likelihood weights.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true)]
    gamma: Option<f64>,
    #[arg(long, global = true, conflicts_with = "csv")]
    json: bool,
    #[arg(long, global = true)]
    csv: bool,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Treat an ill-conditioned regression as a failure (exit 3).
    #[arg(long, global = true)]
    strict: bool,
    /// Worker threads.
    #[arg(long, global = true, env = "HESTON_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate paths and write them as CSV, or binary for a .bin output.
    Simulate,
    /// Price the configured instrument once per seed.
    Price,
    /// Run a benchmark experiment.
    Bench {
        #[command(subcommand)]
        which: BenchCommand,
    },
    /// Run the canned config of a table, e.g. `reproduce table12`.
    Reproduce { id: String },
}

#[derive(Debug, Subcommand)]
enum BenchCommand {
    /// First-break frequencies of the discretisation schemes.
    Break,
    /// Shared-noise RMS against a fine reference, with timings.
    Rms,
    /// Pricing comparison with errors and gains.
    Table,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn overrides(cli: &Cli) -> Result<Overrides, BenchError> {
    let rule = match &cli.rule {
        Some(r) => Some(QuadratureRule::parse(r).ok_or_else(|| BenchError::Config(format!("unknown rule `{r}`")))?),
        None => None,
    };
    Ok(Overrides {
        seed: cli.seed,
        particles: cli.particles,
        substeps: cli.substeps,
        rule,
        epsilon: cli.epsilon,
        gamma: cli.gamma,
        strict: cli.strict,
        out: cli.out.clone(),
    })
}

fn load(cli: &Cli, canned: Option<&str>) -> Result<ExperimentConfig, BenchError> {
    let mut cfg = match (canned, &cli.config) {
        (Some(id), _) => reproduce::canned(id)?,
        (None, Some(path)) => ExperimentConfig::from_path(path)?,
        (None, None) => ExperimentConfig::default(),
    };
    cfg.apply(&overrides(cli)?);
    Ok(cfg)
}

fn format_for(cli: &Cli, out: Option<&Path>) -> Format {
    if cli.json {
        Format::Json
    } else if cli.csv {
        Format::Csv
    } else if out.is_some_and(|p| p.extension().is_some_and(|e| e == "json")) {
        Format::Json
    } else {
        Format::Csv
    }
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>, BenchError> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(cli: &Cli) -> Result<(), BenchError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| BenchError::Config(format!("thread pool: {e}")))?;
    }
    let (cfg, kind) = match &cli.command {
        Command::Simulate => (load(cli, None)?, ExperimentKind::Simulate),
        Command::Price => (load(cli, None)?, ExperimentKind::GroundTruth),
        Command::Bench { which } => {
            let kind = match which {
                BenchCommand::Break => ExperimentKind::BreakFrequency,
                BenchCommand::Rms => ExperimentKind::RmsComparison,
                BenchCommand::Table => ExperimentKind::PriceComparison,
            };
            (load(cli, None)?, kind)
        }
        Command::Reproduce { id } => {
            let cfg = load(cli, Some(id))?;
            eprintln!("{id}: {}", cfg.title);
            if !cfg.notes.is_empty() {
                eprintln!("  {}", cfg.notes);
            }
            let kind = cfg.experiment;
            (cfg, kind)
        }
    };
    let out = cfg.out.as_deref();
    let format = format_for(cli, out);
    match kind {
        ExperimentKind::Simulate => {
            let path = out.unwrap_or(Path::new("paths.csv"));
            let set = experiments::run_simulate(&cfg, path)?;
            eprintln!(
                "wrote {} paths x {} periods to {} ({} weight freezes)",
                set.n_particles,
                set.periods,
                path.display(),
                set.eta_trigger_count()
            );
        }
        ExperimentKind::BreakFrequency => {
            let tables = experiments::run_break_frequency(&cfg)?;
            let rows: Vec<_> = tables.iter().flat_map(|t| t.rows()).collect();
            emit(format, &rows, &tables, sink(out)?)?;
        }
        ExperimentKind::RmsComparison => {
            let report = experiments::run_rms(&cfg)?;
            emit(format, &report.rows, &report, sink(out)?)?;
        }
        ExperimentKind::GroundTruth if matches!(cli.command, Command::Price) => {
            let cmp = experiments::run_price_comparison(&cfg)?;
            let rows: Vec<PriceRow> = cmp.runs.iter().map(|(_, _, r)| PriceRow::from(r)).collect();
            let full: Vec<_> = cmp.runs.iter().map(|(_, _, r)| r).collect();
            emit(format, &rows, &full, sink(out)?)?;
        }
        ExperimentKind::PriceComparison | ExperimentKind::GroundTruth => {
            let cmp = experiments::run_price_comparison(&cfg)?;
            emit(format, &cmp.rows, &cmp, sink(out)?)?;
        }
    }
    Ok(())
}
