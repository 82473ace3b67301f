//! Report parsing.
//!
//! Tool output is copied into [`ParsedWarning`]s as-is: messages, severities
//! and rule ids are never rewritten or mapped onto a common scale. The only
//! transformation is making file paths repo-relative.

mod builtin;
mod infer;
mod pmd;
mod sarif;

use std::collections::{HashMap, HashSet};
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::harness::{RawReport, ReportFormat};

pub use builtin::BuiltinParser;
pub use infer::InferParser;
pub use pmd::PmdParser;
pub use sarif::SarifParser;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IngestError {
    #[error("malformed {format} report: {detail}")]
    MalformedReport { format: ReportFormat, detail: String },
    #[error("no parser registered for {0}")]
    UnknownFormat(ReportFormat),
}

impl IngestError {
    pub(crate) fn malformed(format: ReportFormat, detail: impl ToString) -> Self {
        IngestError::MalformedReport { format, detail: detail.to_string() }
    }
}

/// A finding as the tool reported it, before path normalization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolFinding {
    pub message: String,
    pub path: String,
    pub line: Option<i64>,
    pub severity: Option<String>,
    pub type_tag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedWarning {
    pub message: String,
    pub path: String,
    pub line: Option<u32>,
    pub severity: Option<String>,
    pub type_tag: Option<String>,
    pub duplicate: bool,
    pub fingerprint: u64,
}

pub trait ReportParser: Send + Sync {
    fn format(&self) -> ReportFormat;

    /// Findings in payload order.
    fn parse(&self, payload: &[u8]) -> Result<Vec<ToolFinding>, IngestError>;
}

/// Parsers keyed by report format.
pub struct ParserRegistry {
    parsers: HashMap<ReportFormat, Box<dyn ReportParser>>,
}

impl Default for ParserRegistry {
    fn default() -> Self {
        let mut reg = ParserRegistry { parsers: HashMap::new() };
        reg.register(Box::new(BuiltinParser));
        reg.register(Box::new(PmdParser));
        reg.register(Box::new(InferParser));
        reg.register(Box::new(SarifParser));
        reg
    }
}

impl ParserRegistry {
    pub fn register(&mut self, parser: Box<dyn ReportParser>) {
        self.parsers.insert(parser.format(), parser);
    }

    pub fn supports(&self, format: ReportFormat) -> bool {
        self.parsers.contains_key(&format)
    }

    /// Parse `raw` into warnings with repo-relative paths and fingerprints;
    /// duplicate flags are all false (see [`mark_duplicates`]).
    ///
    /// Findings whose path lies outside `checkout_root` are dropped and
    /// counted in the second tuple element.
    pub fn parse(&self, raw: &RawReport, checkout_root: &Path) -> Result<(Vec<ParsedWarning>, usize), IngestError> {
        let parser = self.parsers.get(&raw.format).ok_or(IngestError::UnknownFormat(raw.format))?;
        let findings = parser.parse(&raw.payload)?;
        let mut dropped = 0;
        let mut out = Vec::with_capacity(findings.len());
        for f in findings {
            let Some(path) = relative_path(&f.path, checkout_root) else {
                dropped += 1;
                continue;
            };
            let message = if f.message.is_empty() {
                f.type_tag.clone().filter(|t| !t.is_empty()).unwrap_or_else(|| "(no message)".into())
            } else {
                f.message
            };
            let line = f.line.filter(|&l| l > 0).and_then(|l| u32::try_from(l).ok());
            let fingerprint = fingerprint(&raw.tool_name, f.type_tag.as_deref(), &path, &message);
            out.push(ParsedWarning {
                message,
                path,
                line,
                severity: f.severity,
                type_tag: f.type_tag,
                duplicate: false,
                fingerprint,
            });
        }
        if dropped > 0 {
            tracing::warn!(tool = %raw.tool_name, dropped, "findings outside the checkout dropped");
        }
        Ok((out, dropped))
    }
}

/// Parse with the default parser set.
pub fn parse_report(raw: &RawReport, checkout_root: &Path) -> Result<Vec<ParsedWarning>, IngestError> {
    ParserRegistry::default().parse(raw, checkout_root).map(|(w, _)| w)
}

/// Line-insensitive identity of a warning within a tool's output.
///
/// SHA-256 over the length-prefixed fields `(tool, type_tag or "", path,
/// message)`; the first eight digest bytes, big-endian.
pub fn fingerprint(tool_name: &str, type_tag: Option<&str>, path: &str, message: &str) -> u64 {
    let mut hasher = Sha256::new();
    for field in [tool_name, type_tag.unwrap_or(""), path, message] {
        hasher.update((field.len() as u64).to_le_bytes());
        hasher.update(field.as_bytes());
    }
    let digest = hasher.finalize();
    u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Flag every warning whose fingerprint already occurred earlier in the list.
pub fn mark_duplicates(mut warnings: Vec<ParsedWarning>) -> Vec<ParsedWarning> {
    let mut seen = HashSet::new();
    for w in &mut warnings {
        w.duplicate = !seen.insert(w.fingerprint);
    }
    warnings
}

/// Make a tool-reported path relative to the checkout. `None` when it points
/// outside the checkout or is empty.
pub fn relative_path(reported: &str, checkout_root: &Path) -> Option<String> {
    let reported = reported.trim();
    if reported.is_empty() {
        return None;
    }
    let path: PathBuf = if reported.starts_with("file:") {
        url::Url::parse(reported).ok()?.to_file_path().ok()?
    } else {
        PathBuf::from(reported)
    };
    let rel = if path.is_absolute() {
        let root = lexical_normalize(checkout_root)?;
        lexical_normalize(&path)?.strip_prefix(&root).ok()?.to_path_buf()
    } else {
        lexical_normalize(&path)?
    };
    let rel = crate::vcs::rel_to_slash(&rel);
    (!rel.is_empty()).then_some(rel)
}

/// Resolve `.` and `..` without touching the filesystem; `None` if `..`
/// climbs above the start of a relative path.
fn lexical_normalize(path: &Path) -> Option<PathBuf> {
    let mut out = PathBuf::new();
    for c in path.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir => {
                if !out.pop() {
                    return None;
                }
            }
            other => out.push(other.as_os_str()),
        }
    }
    Some(out)
}
