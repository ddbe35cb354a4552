//! Command implementations behind the `cotex` binary.

pub mod commands;
pub mod config;
pub mod plot;
pub mod scene;

use std::path::PathBuf;

pub use commands::{cmd_analyze_variance, cmd_detect_conflicts, cmd_render, cmd_texture};
pub use config::{Overrides, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] cotex_core::Error),
}

impl CliError {
    /// 2 for I/O and configuration problems, 1 for pipeline failures.
    pub fn exit_code(&self) -> i32 {
        use cotex_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Core(E::Io(_) | E::Image(_) | E::Parse { .. } | E::InvalidConfig(_)) => 2,
            CliError::Core(_) => 1,
        }
    }

    pub(crate) fn message(&self) -> String {
        match self {
            CliError::Config(m) => m.clone(),
            other => other.to_string(),
        }
    }
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}
