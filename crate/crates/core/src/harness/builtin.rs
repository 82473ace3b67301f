//! Deterministic line-pattern analyzer.
//!
//! Emits `builtin-json`: a JSON array of [`BuiltinFinding`] objects sorted by
//! `(path, line, rule_id)`. The format is described in `docs/builtin-json.md`.

use std::time::Instant;

use globset::{GlobBuilder, GlobMatcher};
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{RawReport, ReportFormat};
use crate::par::{self, Exec};
use crate::vcs::{read_text, CheckoutPath};

#[derive(Debug, Clone)]
pub struct Rule {
    pub id: String,
    pub file_glob: String,
    pub pattern: Regex,
    pub severity: String,
    pub type_tag: String,
    pub message: String,
    matcher: GlobMatcher,
}

impl Rule {
    pub fn new(
        id: &str,
        file_glob: &str,
        pattern: &str,
        severity: &str,
        type_tag: &str,
        message: &str,
    ) -> Result<Self, String> {
        let matcher = GlobBuilder::new(file_glob)
            .literal_separator(true)
            .build()
            .map_err(|e| format!("rule {id}: bad glob: {e}"))?
            .compile_matcher();
        let pattern = Regex::new(pattern).map_err(|e| format!("rule {id}: bad pattern: {e}"))?;
        Ok(Rule {
            id: id.to_string(),
            file_glob: file_glob.to_string(),
            pattern,
            severity: severity.to_string(),
            type_tag: type_tag.to_string(),
            message: message.to_string(),
            matcher,
        })
    }

    pub fn applies_to(&self, path: &str) -> bool {
        self.matcher.is_match(path)
    }
}

const JVM_SOURCES: &str = "**/*.{java,kt,scala,groovy}";

pub fn default_ruleset() -> Vec<Rule> {
    let rules = [
        (
            "command-exec",
            JVM_SOURCES,
            r"Runtime\.getRuntime\(\)\.exec\(",
            "HIGH",
            "CWE-78",
            "Process started from a command string; check for OS command injection",
        ),
        ("hardcoded-credential", "**/*", r#"password\s*=\s*""#, "HIGH", "CWE-798", "Hard-coded password literal"),
        (
            "insecure-random",
            JVM_SOURCES,
            r"new Random\(",
            "LOW",
            "CWE-330",
            "java.util.Random is not suitable for security-sensitive values",
        ),
        (
            "sql-concat",
            JVM_SOURCES,
            r#"executeQuery\(\s*"[^"]*"\s*\+"#,
            "HIGH",
            "CWE-89",
            "SQL query built by string concatenation",
        ),
        (
            "weak-hash",
            JVM_SOURCES,
            r#"MessageDigest\.getInstance\(\s*"(MD5|SHA-?1)"\s*\)"#,
            "MEDIUM",
            "CWE-328",
            "Weak hash algorithm (MD5/SHA-1)",
        ),
    ];
    rules
        .into_iter()
        .map(|(id, glob, pat, sev, tag, msg)| Rule::new(id, glob, pat, sev, tag, msg).expect("default rules compile"))
        .collect()
}

/// One entry of a builtin-json report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuiltinFinding {
    pub rule_id: String,
    pub message: String,
    pub path: String,
    pub line: u32,
    pub severity: String,
    pub type_tag: String,
}

fn scan_file(checkout: &CheckoutPath, rel: &str, rules: &[&Rule]) -> Vec<BuiltinFinding> {
    let Some(content) = read_text(&checkout.root, rel) else {
        return Vec::new();
    };
    let mut found = Vec::new();
    for (idx, raw) in content.split(|&b| b == b'\n').enumerate() {
        let line = String::from_utf8_lossy(raw);
        for rule in rules {
            if rule.pattern.is_match(&line) {
                found.push(BuiltinFinding {
                    path: rel.to_string(),
                    line: idx as u32 + 1,
                    rule_id: rule.id.clone(),
                    message: rule.message.clone(),
                    severity: rule.severity.clone(),
                    type_tag: rule.type_tag.clone(),
                });
            }
        }
    }
    found
}

/// Findings for every tracked text file, sorted by `(path, line, rule_id)`.
pub fn scan_findings(checkout: &CheckoutPath, rules: &[Rule], exec: Exec) -> Vec<BuiltinFinding> {
    let per_file = par::map(exec, &checkout.tracked, |rel| {
        let applicable: Vec<&Rule> = rules.iter().filter(|r| r.applies_to(rel)).collect();
        if applicable.is_empty() {
            Vec::new()
        } else {
            scan_file(checkout, rel, &applicable)
        }
    });
    let mut findings: Vec<BuiltinFinding> = per_file.into_iter().flatten().collect();
    findings.sort_by(|a, b| {
        (a.path.as_str(), a.line, a.rule_id.as_str()).cmp(&(b.path.as_str(), b.line, b.rule_id.as_str()))
    });
    findings
}

pub fn builtin_scan(checkout: &CheckoutPath, rules: &[Rule]) -> RawReport {
    builtin_scan_with(checkout, rules, Exec::default())
}

pub fn builtin_scan_with(checkout: &CheckoutPath, rules: &[Rule], exec: Exec) -> RawReport {
    let started = Instant::now();
    let findings = scan_findings(checkout, rules, exec);
    let payload = serde_json::to_vec_pretty(&findings).expect("findings serialize");
    RawReport {
        tool_name: "builtin".to_string(),
        format: ReportFormat::BuiltinJson,
        payload,
        exit_code: 0,
        duration: started.elapsed(),
    }
}
