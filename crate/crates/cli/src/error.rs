use std::path::{Path, PathBuf};

use cellshare_core::classify::ClassifyError;
use cellshare_core::fboxplot::BoxplotError;
use cellshare_core::hog::HogError;
use cellshare_core::linkage::LinkageError;
use cellshare_core::series::SeriesError;
use cellshare_core::synth::SynthError;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("stage `{stage}` needs {artifact}, which is missing; run `{producer}` first")]
    Dependency { stage: &'static str, artifact: String, producer: &'static str },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Hog(#[from] HogError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Boxplot(#[from] BoxplotError),
    #[error(transparent)]
    Linkage(#[from] LinkageError),
    #[error("server: {0}")]
    Server(String),
}

/// Machine-readable error body shared by the CLI and the HTTP API.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct ErrorReport {
    pub code: String,
    pub message: String,
}

impl CliError {
    pub fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, message: impl std::fmt::Display) -> CliError {
        CliError::Format { path: path.to_path_buf(), message: message.to_string() }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Dependency { .. } => "dependency",
            CliError::Io { .. } => "io",
            CliError::Format { .. } => "format",
            CliError::Synth(_) => "synth",
            CliError::Series(_) => "series",
            CliError::Hog(_) => "hog",
            CliError::Classify(_) => "cluster",
            CliError::Boxplot(_) => "fboxplot",
            CliError::Linkage(_) => "linkage",
            CliError::Server(_) => "server",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Dependency { .. } => 3,
            _ => 1,
        }
    }

    pub fn report(&self) -> ErrorReport {
        ErrorReport { code: self.code().into(), message: self.to_string() }
    }
}
