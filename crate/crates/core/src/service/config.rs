//! Platform configuration (TOML).
//!
//! ```toml
//! version = 1
//! storage_dsn = "sastwatch.db"        # or env SASTWATCH_DSN, or --dsn
//! workdir = "work"
//! api_bind = "127.0.0.1:8080"
//! poll_interval_secs = 900
//! tools_enabled = ["builtin", "pmd"]
//!
//! [retry]
//! max_failures = 3
//! per_run_timeout_secs = 1800
//!
//! [[repositories]]
//! git_url = "https://github.com/org/app.git"
//! branch = "main"                     # optional, defaults to the remote HEAD
//! languages = ["java"]
//!
//! [[tools]]                           # optional extra or overriding tool specs
//! name = "pmd"
//! ...
//! ```
//!
//! Relative paths are resolved against the config file's directory.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::harness::{default_registry, ToolSpec};
use crate::planner::RetryPolicy;
use crate::vcs::repo_name_from_url;

pub const CONFIG_VERSION: u32 = 1;
pub const DSN_ENV: &str = "SASTWATCH_DSN";
pub const DEFAULT_POLL_INTERVAL: Duration = Duration::from_secs(15 * 60);

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepoConfig {
    pub git_url: String,
    #[serde(default)]
    pub branch: Option<String>,
    pub languages: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RetryFile {
    max_failures: Option<u32>,
    per_run_timeout_secs: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    version: Option<u32>,
    #[serde(default)]
    repositories: Vec<RepoConfig>,
    tools_enabled: Option<Vec<String>>,
    poll_interval_secs: Option<f64>,
    retry: Option<RetryFile>,
    storage_dsn: Option<String>,
    api_bind: Option<String>,
    workdir: Option<PathBuf>,
    #[serde(default)]
    tools: Vec<ToolSpec>,
}

/// Values that take precedence over the file (CLI flags).
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub storage_dsn: Option<String>,
    pub workdir: Option<PathBuf>,
    pub api_bind: Option<String>,
    pub poll_interval: Option<Duration>,
}

#[derive(Debug, Clone)]
pub struct PlatformConfig {
    pub repositories: Vec<RepoConfig>,
    pub tools_enabled: Vec<String>,
    pub poll_interval: Duration,
    pub retry: RetryPolicy,
    pub storage_dsn: String,
    pub api_bind: String,
    pub workdir: PathBuf,
    /// Default registry with config-defined tools merged in by name.
    pub registry: Vec<ToolSpec>,
}

impl PlatformConfig {
    /// A config for `repositories` with every other field at its default.
    pub fn new(repositories: Vec<RepoConfig>, storage_dsn: impl Into<String>, workdir: impl Into<PathBuf>) -> Self {
        PlatformConfig {
            repositories,
            tools_enabled: vec!["builtin".into()],
            poll_interval: DEFAULT_POLL_INTERVAL,
            retry: RetryPolicy::default(),
            storage_dsn: storage_dsn.into(),
            api_bind: "127.0.0.1:8080".into(),
            workdir: workdir.into(),
            registry: default_registry(),
        }
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        // Absolute, since git later runs with other working directories.
        let base = std::path::absolute(path).ok().and_then(|p| p.parent().map(Path::to_path_buf)).unwrap_or_default();
        let env_dsn = std::env::var(DSN_ENV).ok().filter(|s| !s.is_empty());
        Self::from_toml(&text, &base, overrides, env_dsn).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse { path: path.to_path_buf(), message },
            other => other,
        })
    }

    /// Parse config text. `base` anchors relative paths; `env_dsn` is the
    /// environment override, applied below `overrides`.
    pub fn from_toml(
        text: &str,
        base: &Path,
        overrides: &Overrides,
        env_dsn: Option<String>,
    ) -> Result<Self, ConfigError> {
        let file: ConfigFile =
            toml::from_str(text).map_err(|e| ConfigError::Parse { path: PathBuf::new(), message: e.to_string() })?;
        if let Some(v) = file.version {
            if v != CONFIG_VERSION {
                return Err(ConfigError::Invalid(format!("unsupported config version {v}")));
            }
        }

        let mut registry = default_registry();
        for spec in file.tools {
            match registry.iter_mut().find(|t| t.name == spec.name) {
                Some(slot) => *slot = spec,
                None => registry.push(spec),
            }
        }

        let retry_file = file.retry.unwrap_or(RetryFile { max_failures: None, per_run_timeout_secs: None });
        let defaults = RetryPolicy::default();
        let retry = RetryPolicy {
            max_failures: retry_file.max_failures.unwrap_or(defaults.max_failures),
            per_run_timeout: match retry_file.per_run_timeout_secs {
                Some(s) => secs(s, "retry.per_run_timeout_secs")?,
                None => defaults.per_run_timeout,
            },
        };
        let poll_interval = match (overrides.poll_interval, file.poll_interval_secs) {
            (Some(d), _) => d,
            (None, Some(s)) => secs(s, "poll_interval_secs")?,
            (None, None) => DEFAULT_POLL_INTERVAL,
        };

        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        let storage_dsn =
            overrides.storage_dsn.clone().or(env_dsn).or(file.storage_dsn).unwrap_or_else(|| "sastwatch.db".into());
        let storage_dsn = resolve_dsn(&storage_dsn, base);

        let config = PlatformConfig {
            repositories: file.repositories,
            tools_enabled: file.tools_enabled.unwrap_or_else(|| vec!["builtin".into()]),
            poll_interval,
            retry,
            storage_dsn,
            api_bind: overrides.api_bind.clone().or(file.api_bind).unwrap_or_else(|| "127.0.0.1:8080".into()),
            workdir: resolve(overrides.workdir.clone().or(file.workdir).unwrap_or_else(|| "work".into())),
            registry,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.repositories.is_empty() {
            return invalid("at least one repository is required".into());
        }
        if self.poll_interval < Duration::from_secs(1) {
            return invalid("poll interval must be at least 1 s".into());
        }
        self.retry.validate().map_err(ConfigError::Invalid)?;
        let mut names = std::collections::HashSet::new();
        for repo in &self.repositories {
            let name = repo_name_from_url(&repo.git_url).map_err(|e| ConfigError::Invalid(e.to_string()))?;
            if !names.insert(name.clone()) {
                return invalid(format!("two repositories share the name {name:?}"));
            }
            if repo.languages.is_empty() {
                return invalid(format!("repository {name:?} lists no languages"));
            }
        }
        for spec in &self.registry {
            spec.validate().map_err(ConfigError::Invalid)?;
        }
        if self.tools_enabled.is_empty() {
            return invalid("tools_enabled is empty".into());
        }
        for name in &self.tools_enabled {
            if !self.registry.iter().any(|t| &t.name == name) {
                return invalid(format!("enabled tool {name:?} is not registered"));
            }
        }
        Ok(())
    }

    /// Enabled tools in registration order.
    pub fn enabled_tools(&self) -> Vec<ToolSpec> {
        self.registry.iter().filter(|t| self.tools_enabled.contains(&t.name)).cloned().collect()
    }
}

fn secs(v: f64, field: &str) -> Result<Duration, ConfigError> {
    Duration::try_from_secs_f64(v).map_err(|_| ConfigError::Invalid(format!("{field} must be a non-negative number")))
}

fn resolve_dsn(dsn: &str, base: &Path) -> String {
    let (prefix, rest) = match dsn.strip_prefix("sqlite://") {
        Some(r) => ("sqlite://", r),
        None => match dsn.strip_prefix("sqlite:") {
            Some(r) => ("sqlite:", r),
            None => ("", dsn),
        },
    };
    if rest == ":memory:" || rest.contains("://") || Path::new(rest).is_absolute() {
        dsn.to_string()
    } else {
        format!("{prefix}{}", base.join(rest).display())
    }
}
