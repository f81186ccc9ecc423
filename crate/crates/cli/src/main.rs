use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nchns::analysis::CertificateKind;
use nchns_cli::{cmd_certify, cmd_decay, cmd_evolve, cmd_steady, cmd_validate, load_config, CliError, CliResult, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "nchns", version, about = "Nonlocal Cahn-Hilliard-Navier-Stokes laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (defaults to `output.dir`, then `nchns-out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `initial.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the structural assumptions and print the report.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Compute a steady state and write it as snapshots.
    Steady {
        #[command(flatten)]
        common: Common,
    },
    /// Evolve the initial data and write the trajectory.
    Evolve {
        #[command(flatten)]
        common: Common,
        /// Steady snapshot directory to track the distance to.
        #[arg(long)]
        steady: Option<PathBuf>,
    },
    /// Evaluate a uniqueness or stability certificate.
    Certify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        steady: Option<PathBuf>,
        /// uniqueness2d, uniqueness3d or stability2d.
        #[arg(long)]
        mode: String,
    },
    /// Certify stability, evolve, and check the decay bound.
    Decay {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        steady: PathBuf,
        /// Multiply the certified rate (negative control).
        #[arg(long, default_value_t = 1.0)]
        inflate_rho: f64,
    },
}

fn out_dir(common: &Common, cfg: &nchns_cli::config::RunConfig) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("nchns-out"))
}

fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Validate { common } => {
            let cfg = load_config(&common.config, common.seed)?;
            let (report, pass) = cmd_validate(&cfg)?;
            if pass {
                Ok(report)
            } else {
                Err(CliError::Invalid(format!("assumptions failed\n{report}")))
            }
        }
        Command::Steady { common } => {
            let cfg = load_config(&common.config, common.seed)?;
            cmd_steady(&cfg, &out_dir(&common, &cfg))
        }
        Command::Evolve { common, steady } => {
            let cfg = load_config(&common.config, common.seed)?;
            cmd_evolve(&cfg, &out_dir(&common, &cfg), steady.as_deref())
        }
        Command::Certify { common, steady, mode } => {
            let kind = CertificateKind::parse(&mode)
                .ok_or_else(|| CliError::Invalid(format!("unknown mode `{mode}` (uniqueness2d, uniqueness3d, stability2d)")))?;
            let cfg = load_config(&common.config, common.seed)?;
            cmd_certify(&cfg, &out_dir(&common, &cfg), steady.as_deref(), kind)
        }
        Command::Decay { common, steady, inflate_rho } => {
            if !(inflate_rho > 0.0 && inflate_rho.is_finite()) {
                return Err(CliError::Invalid(format!("--inflate-rho must be positive, got {inflate_rho}")));
            }
            let cfg = load_config(&common.config, common.seed)?;
            cmd_decay(&cfg, &out_dir(&common, &cfg), &steady, inflate_rho)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
