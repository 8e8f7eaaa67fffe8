//! Pipeline driver and HTTP service for grid density profiling and census
//! linkage.

pub mod api;
pub mod artifacts;
pub mod config;
pub mod error;
pub mod plot;
pub mod stages;

pub use config::RunConfig;
pub use error::CliError;
pub use stages::Run;
