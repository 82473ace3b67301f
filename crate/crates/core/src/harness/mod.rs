//! Analyzer registry, build detection and tool invocation.

pub mod build;
pub mod builtin;
pub mod invoke;
pub mod registry;

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner::Outcome;

pub use build::{detect_build_system, BuildKind, BuildSystem};
pub use builtin::{builtin_scan, builtin_scan_with, default_ruleset, scan_findings, BuiltinFinding, Rule};
pub use invoke::invoke_tool;
pub use registry::default_registry;

/// Report formats a tool can emit. Only some of them have parsers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    BuiltinJson,
    PmdJson,
    InferJson,
    Sarif,
    FlowdroidXml,
    MobsfJson,
    XanitizerXml,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 7] = [
        ReportFormat::BuiltinJson,
        ReportFormat::PmdJson,
        ReportFormat::InferJson,
        ReportFormat::Sarif,
        ReportFormat::FlowdroidXml,
        ReportFormat::MobsfJson,
        ReportFormat::XanitizerXml,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ReportFormat::BuiltinJson => "builtin-json",
            ReportFormat::PmdJson => "pmd-json",
            ReportFormat::InferJson => "infer-json",
            ReportFormat::Sarif => "sarif",
            ReportFormat::FlowdroidXml => "flowdroid-xml",
            ReportFormat::MobsfJson => "mobsf-json",
            ReportFormat::XanitizerXml => "xanitizer-xml",
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ReportFormat::ALL.into_iter().find(|f| f.as_str() == s).ok_or_else(|| format!("unknown report format {s:?}"))
    }
}

/// How a tool is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Runner {
    /// Render the invocation template and run it with `sh -c`.
    #[default]
    Shell,
    /// The in-process line scanner.
    Builtin,
    /// Registered for bookkeeping, but there is no way to run it per commit.
    Unsupported,
}

fn default_exit_codes() -> Vec<i32> {
    vec![0]
}

/// A registered analyzer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub category: String,
    pub languages: Vec<String>,
    /// Command line with `{checkout}`, `{report_out}`, `{build_config}`
    /// placeholders (`{resultDir}` and `{compileConfig}` are accepted too).
    pub invocation_template: String,
    pub report_format: ReportFormat,
    pub version: String,
    #[serde(default)]
    pub runner: Runner,
    /// Exit codes that mean "ran to completion", findings or not.
    #[serde(default = "default_exit_codes")]
    pub success_exit_codes: Vec<i32>,
    /// Report location relative to the tool's working directory, for tools
    /// that write a fixed file name instead of taking `{report_out}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_path: Option<String>,
}

impl ToolSpec {
    /// The value stored in the tool table's `configuration` column.
    pub fn configuration(&self) -> &str {
        &self.invocation_template
    }

    pub fn requires_build(&self) -> bool {
        self.invocation_template.contains("{build_config}") || self.invocation_template.contains("{compileConfig}")
    }

    /// `languages ∩ wanted ≠ ∅`, case-insensitively; `any` on either side
    /// matches everything.
    pub fn supports_any<S: AsRef<str>>(&self, wanted: &[S]) -> bool {
        let any = |s: &str| s.eq_ignore_ascii_case("any");
        if self.languages.iter().any(|l| any(l)) || wanted.iter().any(|w| any(w.as_ref())) {
            return true;
        }
        self.languages.iter().any(|l| wanted.iter().any(|w| l.eq_ignore_ascii_case(w.as_ref())))
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.name.trim().is_empty() {
            return Err("tool name is empty".into());
        }
        if self.runner == Runner::Shell && self.report_path.is_none() && self.invocation_template.trim().is_empty() {
            return Err(format!("tool {:?} has an empty invocation template", self.name));
        }
        if self.success_exit_codes.is_empty() {
            return Err(format!("tool {:?} has no success exit codes", self.name));
        }
        Ok(())
    }
}

/// Contents of one tool run's output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawReport {
    pub tool_name: String,
    pub format: ReportFormat,
    pub payload: Vec<u8>,
    pub exit_code: i32,
    pub duration: Duration,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("tool command {0:?} is not installed")]
    ToolNotInstalled(String),
    #[error("tool run exceeded {0:?}")]
    Timeout(Duration),
    #[error("tool exited with code {code}: {stderr}")]
    NonzeroExit { code: i32, stderr: String },
    #[error("tool {0:?} needs a Gradle or Maven build but none was found")]
    MissingBuild(String),
    #[error("tool {tool:?} has no executor for placeholder {placeholder}")]
    UnresolvedPlaceholder { tool: String, placeholder: String },
    #[error("tool {0:?} cannot be executed per commit")]
    Unsupported(String),
    #[error("tool finished but wrote no report at {0}")]
    ReportMissing(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// How the failed run counts toward the retry policy.
    pub fn outcome(&self) -> Outcome {
        match self {
            HarnessError::Timeout(_) => Outcome::Timeout,
            HarnessError::MissingBuild(_)
            | HarnessError::UnresolvedPlaceholder { .. }
            | HarnessError::Unsupported(_) => Outcome::Permanent,
            _ => Outcome::Failure,
        }
    }
}
