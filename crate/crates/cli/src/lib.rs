//! Batch experiment harness over `specedge`: edge predictions, convergence
//! sweeps, assumption audits, toy-scale oracle suites and heavy-tail negative
//! controls, each driven by a JSON config and writing CSV + JSON outputs.

// `!(x > 0.0)` is used on purpose to reject NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use specedge::Exec;

pub use commands::audit::{cmd_audit, AuditReport};
pub use commands::converge::{cmd_converge, ExperimentResult};
pub use commands::edge::{cmd_edge, EdgeOutput};
pub use commands::negative::{cmd_negative_control, NegativeControlReport};
pub use commands::oracle::{cmd_oracle, OracleReport};
pub use commands::Prediction;
pub use config::{Command, ExperimentConfig, Mode};
pub use error::{CliError, CliResult};
pub use output::OutputDir;

/// Default output directory when neither `--out` nor `output.dir` is given.
pub const DEFAULT_OUT_DIR: &str = "specedge-out";

/// Resolves the config for `cmd`, runs it, writes its outputs and returns a
/// one-line summary. Oracle failures and negative controls that contradict
/// their expectation are reported as [`CliError::Failure`] after the outputs
/// are written.
pub fn run(cmd: Command, cfg: ExperimentConfig, out: Option<PathBuf>, exec: Exec) -> CliResult<String> {
    let cfg = cfg.resolve(cmd)?;
    let dir = OutputDir::new(
        out.or_else(|| cfg.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
    );
    match cmd {
        Command::Edge => {
            let r = cmd_edge(&cfg, exec)?;
            r.write(&dir)?;
            Ok(r.summary())
        }
        Command::Converge => {
            let r = cmd_converge(&cfg, exec)?;
            r.write(&dir)?;
            Ok(r.summary())
        }
        Command::Audit => {
            let r = cmd_audit(&cfg, exec)?;
            r.write(&dir)?;
            Ok(r.summary())
        }
        Command::Oracle => {
            let r = cmd_oracle(&cfg, exec)?;
            r.write(&dir)?;
            if r.passes {
                Ok(r.summary())
            } else {
                Err(CliError::Failure(r.summary()))
            }
        }
        Command::NegativeControl => {
            let r = cmd_negative_control(&cfg, exec)?;
            r.write(&dir)?;
            if r.consistent {
                Ok(r.summary())
            } else {
                Err(CliError::Failure(r.summary()))
            }
        }
    }
}
