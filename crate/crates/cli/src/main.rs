use clap::{Parser, Subcommand};
use dkinv::commands::{self, Level};
use dkinv::{configure_threads, CliError};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dkinv", version, about = "Inversion of D-difference operators and canonical-system recovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the inverse kernel T_ij(x, t) on an N x N midpoint grid.
    Invert {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover gamma(x) and H(x) at M uniform samples of [0, l].
    Recover {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the residual checks and write a JSON report.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "quick")]
        level: Level,
        #[arg(long)]
        report: PathBuf,
    },
    /// Evaluate the Weyl function at RE,IM pairs (JSON lines on stdout).
    Weyl {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, required = true, allow_hyphen_values = true)]
        lambda: Vec<String>,
        /// Real points T,... at which to sample the Herglotz density.
        #[arg(long, allow_hyphen_values = true)]
        density: Vec<String>,
    },
}

fn run(cli: Cli) -> Result<i32, CliError> {
    configure_threads()?;
    match cli.command {
        Command::Invert { config, grid, out } => commands::invert(&config, grid, &out),
        Command::Recover { config, samples, out } => commands::recover(&config, samples, &out),
        Command::Verify { config, level, report } => commands::verify(&config, level, &report),
        Command::Weyl { config, lambda, density } => {
            let lambdas = commands::parse_lambdas(&lambda)?;
            let density = commands::parse_reals(&density)?;
            commands::weyl(&config, &lambdas, &density, &mut std::io::stdout().lock())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("dkinv: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
