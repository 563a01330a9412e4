//! Command implementations behind the `delight` binary.

pub mod config;
pub mod run;
pub mod sweep;

use std::path::PathBuf;

pub use config::{DatasetSource, ExperimentConfig, Testbed};

/// Environment variable holding the default output directory.
pub const OUTDIR_ENV: &str = "DELIGHT_OUTDIR";
pub const DEFAULT_OUTDIR: &str = "runs";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid value for `{field}`: {reason}")]
    Field { field: &'static str, reason: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config line {line}: expected key=value, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error(transparent)]
    Library(#[from] delight::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("writing csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("writing json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn field(field: &'static str, reason: impl Into<String>) -> Self {
        CliError::Field {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Usage errors exit with 2, runtime failures with 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Field { .. } | CliError::UnknownKey(_) | CliError::Syntax { .. } => 2,
            CliError::Library(delight::Error::InvalidArgument { .. }) => 2,
            _ => 1,
        }
    }
}

/// Runs the property suite, printing one line per check. Returns whether
/// every check passed.
pub fn cmd_verify(inject_fault: bool, out: &mut impl std::io::Write) -> std::io::Result<bool> {
    let report = delight::verify::run_all(&delight::verify::VerifyOptions {
        flip_gate_sign: inject_fault,
    });
    writeln!(out, "{report}")?;
    Ok(report.all_passed())
}
