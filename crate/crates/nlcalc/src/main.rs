use clap::{Parser, Subcommand};
use nlcalc::cli::{cmd_assemble, cmd_compare_l, cmd_simulate, cmd_verify, CliOverrides};
use nlcalc::config::RunConfig;
use nlcalc::Error;
use std::path::PathBuf;
use std::process::ExitCode;

/// Nonlocal calculus and peridynamics toolbox.
#[derive(Parser)]
#[command(name = "nlcalc", version, about)]
struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Comma-separated identity suites for `verify`.
    #[arg(long, global = true, value_delimiter = ',')]
    suite: Option<Vec<String>>,

    /// Suppress per-row output.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run identity suites and write the residual report.
    Verify,
    /// Compare the three forms of the peridynamic operator.
    CompareL,
    /// Assemble the block kernel and export it as CSV.
    Assemble,
    /// Run the explicit dynamics and export trajectory and energy CSVs.
    Simulate,
}

fn init_thread_pool() {
    if let Ok(requested) = std::env::var("NLCALC_THREADS") {
        if let Ok(n) = requested.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn run(cli: &Cli) -> nlcalc::Result<i32> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config PATH is required".into()))?;
    let config = RunConfig::from_path(config_path)?;
    let overrides = CliOverrides {
        seed: cli.seed,
        out: cli.out.clone(),
        suites: cli.suite.clone(),
        quiet: cli.quiet,
    };
    match cli.command {
        Command::Verify => cmd_verify(&config, &overrides),
        Command::CompareL => cmd_compare_l(&config, &overrides),
        Command::Assemble => cmd_assemble(&config, &overrides),
        Command::Simulate => cmd_simulate(&config, &overrides),
    }
}

fn main() -> ExitCode {
    init_thread_pool();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                // usage errors: bad config, bad files, impossible requests
                Error::Config(_) | Error::Io(_) | Error::Precondition(_) | Error::Dimension(_) => 2,
                // runtime verification or simulation failures
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}
