use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use irsp_cli::commands;

/// Interacting reinforced stochastic processes: simulation, asymptotics and inference.
#[derive(Debug, Parser)]
#[command(name = "irsp", version)]
struct Cli {
    /// Worker threads for replica parallelism; defaults to the available cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate an ensemble and write trajectory CSVs plus summary.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print regime tags, rates and asymptotic covariances.
    Covariance {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Confidence interval for the common limit from an actions CSV.
    Ci {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Chi-square test of a hypothesized interaction matrix.
    TestW {
        #[arg(long)]
        data: PathBuf,
        /// Hypothesized network CSV.
        #[arg(long)]
        w: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Significance level reported as `rejected`.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo check of the limit theorems.
    VerifyClt {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long)]
        horizon: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Deterministic oracle suites.
    Lemmas {
        #[arg(long, default_value = "all")]
        suite: String,
        /// Horizon of the limit probes.
        #[arg(long, default_value_t = 1_000_000)]
        horizon: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a network CSV and print its spectral summary.
    ValidateNetwork {
        path: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads;
    let result = match &cli.command {
        Command::Simulate { config, replicas, seed, out } => commands::simulate(config, *replicas, *seed, out.as_deref(), threads),
        Command::Covariance { config, out } => commands::covariance(config, out.as_deref()),
        Command::Ci { data, config, level, out } => commands::ci(data, config, *level, out.as_deref()),
        Command::TestW { data, w, config, alpha, out } => commands::test_w(data, w, config, *alpha, out.as_deref()),
        Command::VerifyClt { config, replicas, horizon, out } => commands::verify_clt(config, *replicas, *horizon, out.as_deref(), threads),
        Command::Lemmas { suite, horizon, out } => commands::lemmas(suite, *horizon, out.as_deref()),
        Command::ValidateNetwork { path, out } => commands::validate_network_file(path, out.as_deref()),
    };
    match result {
        Ok(outcome) => {
            println!("{}", serde_json::to_string_pretty(&outcome.report).expect("reports serialize"));
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
