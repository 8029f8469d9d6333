use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use specedge::Exec;
use specedge_cli::{run, CliError, Command, ExperimentConfig};

#[derive(Parser)]
#[command(name = "specedge", version, about = "Spectral-edge predictions and desk-scale checks")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Moment sequence and edge estimates of the limit kernel.
    Edge(Common),
    /// Sample matrices over an N grid and compare norms with the prediction.
    Converge(Common),
    /// Run the assumption checkers and report which convergence routes apply.
    Audit(Common),
    /// Toy-scale identities of the trace expansion.
    Oracle(Common),
    /// Heavy-tailed sweep that is expected to diverge.
    NegativeControl(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the data-parallel loops.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Sub::Edge(a) => (Command::Edge, a),
        Sub::Converge(a) => (Command::Converge, a),
        Sub::Audit(a) => (Command::Audit, a),
        Sub::Oracle(a) => (Command::Oracle, a),
        Sub::NegativeControl(a) => (Command::NegativeControl, a),
    };
    match execute(cmd, args) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("specedge {}: {e}", cmd.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cmd: Command, args: Common) -> Result<String, CliError> {
    let exec = match args.threads {
        Some(0) => return Err(CliError::Config("--threads must be positive".into())),
        Some(1) => Exec::Sequential,
        Some(n) => {
            init_pool(n)?;
            Exec::default()
        }
        None => Exec::default(),
    };
    let cfg = ExperimentConfig::load(&args.config)?;
    run(cmd, cfg, args.out, exec)
}

#[cfg(feature = "parallel")]
fn init_pool(n: usize) -> Result<(), CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

#[cfg(not(feature = "parallel"))]
fn init_pool(_n: usize) -> Result<(), CliError> {
    Ok(())
}
