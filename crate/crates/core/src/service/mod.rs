//! Pipeline wiring: configuration, analysis cycles, polling loop, query API.

pub mod api;
pub mod config;
pub mod logging;
pub mod pipeline;

pub use api::{router, serve, serve_api, shutdown_flag, ServeError};
pub use config::{ConfigError, Overrides, PlatformConfig, RepoConfig};
pub use pipeline::{analyze_once, analyze_with, monitor_loop, CycleSummary, PipelineError};
