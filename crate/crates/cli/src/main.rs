mod commands;
mod config;
mod output;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Config;
use output::{Format, OutDir};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] rough_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

/// Rough paths, rough differential equations and averaging studies.
#[derive(Debug, Parser)]
#[command(name = "roughavg", version)]
struct Cli {
    /// TOML configuration; every key has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
    /// Print the resolved configuration with all defaults and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a rough path and serialize it.
    Lift {
        #[arg(long, value_parser = parse_kind)]
        kind: Option<rough_core::lifts::NoiseKind>,
        #[arg(long)]
        hurst: Option<f64>,
        /// Grid cells.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Solve the RDE of the [solve] section.
    Solve,
    /// One slow-fast trajectory with diagnostics.
    Slowfast {
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Build and export an f-bar table.
    Average,
    /// Run the convergence study of the [study] section.
    Study,
    /// Run the invariant checks; exit 3 on failure.
    Selftest {
        /// Also scan this serialized rough path.
        #[arg(long)]
        lift: Option<PathBuf>,
    },
}

fn parse_kind(s: &str) -> Result<rough_core::lifts::NoiseKind, String> {
    let quoted = format!("\"{s}\"");
    serde_json::from_str(&quoted).map_err(|_| format!("unknown noise kind {s}"))
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Lift { .. } => "lift",
            Command::Solve => "solve",
            Command::Slowfast { .. } => "slowfast",
            Command::Average => "average",
            Command::Study => "study",
            Command::Selftest { .. } => "selftest",
        }
    }
}

fn resolve(cli: &Cli) -> Result<Config, CliError> {
    let mut config = Config::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    match &cli.command {
        Command::Lift { kind, hurst, n, dim } => {
            let l = &mut config.lift;
            l.kind = kind.unwrap_or(l.kind);
            l.hurst = hurst.or(l.hurst);
            l.n = n.unwrap_or(l.n);
            l.dim = dim.unwrap_or(l.dim);
        }
        Command::Slowfast { epsilon: Some(e) } => config.slowfast.epsilon = *e,
        _ => {}
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let config = resolve(&cli)?;
    if cli.print_config {
        print!("{}", config.to_toml());
        return Ok(0);
    }
    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(CliError::Config("--workers must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))?;

    if let Command::Selftest { lift } = &cli.command {
        let checks = selftest::run(lift.as_deref())?;
        let mut failed = 0;
        for c in &checks {
            println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            failed += usize::from(!c.passed);
        }
        return Ok(if failed == 0 { 0 } else { 3 });
    }

    let mut out = OutDir::create(&cli.out, cli.format)?;
    let (hashes, diagnostics) = match &cli.command {
        Command::Lift { .. } => (commands::lift(&config, &mut out)?, None),
        Command::Solve => (commands::solve(&config, &mut out)?, None),
        Command::Slowfast { .. } => {
            let (h, d) = commands::slowfast(&config, &mut out)?;
            (h, Some(d))
        }
        Command::Average => {
            commands::average(&config, &mut out)?;
            (Vec::new(), None)
        }
        Command::Study => {
            let (h, d) = commands::study(&config, &mut out)?;
            (h, Some(d))
        }
        Command::Selftest { .. } => unreachable!(),
    };
    out.finish(cli.command.name(), &config, workers, hashes, diagnostics)?;
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
