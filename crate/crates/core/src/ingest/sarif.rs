//! SARIF 2.1.0.
//!
//! Only the parts needed to locate and describe a result are modelled. Each
//! result yields one finding located at its first physical location.

use std::collections::HashMap;

use serde::Deserialize;

use super::{IngestError, ReportParser, ToolFinding};
use crate::harness::ReportFormat;

#[derive(Deserialize)]
struct SarifLog {
    version: String,
    runs: Vec<Run>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct Run {
    tool: Tool,
    #[serde(default)]
    results: Option<Vec<SarifResult>>,
    #[serde(default)]
    artifacts: Vec<Artifact>,
    #[serde(default)]
    original_uri_base_ids: HashMap<String, ArtifactLocation>,
}

#[derive(Deserialize)]
struct Tool {
    driver: Driver,
}

#[derive(Deserialize)]
struct Driver {
    #[serde(default)]
    rules: Vec<ReportingDescriptor>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct ReportingDescriptor {
    id: String,
    #[serde(default)]
    message_strings: HashMap<String, MultiformatMessage>,
}

#[derive(Deserialize)]
struct MultiformatMessage {
    text: Option<String>,
}

#[derive(Deserialize)]
struct Artifact {
    location: Option<ArtifactLocation>,
}

#[derive(Deserialize, Clone, Default)]
#[serde(rename_all = "camelCase")]
struct ArtifactLocation {
    uri: Option<String>,
    uri_base_id: Option<String>,
    index: Option<usize>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct SarifResult {
    rule_id: Option<String>,
    rule_index: Option<usize>,
    rule: Option<RuleReference>,
    message: Message,
    level: Option<String>,
    #[serde(default)]
    locations: Vec<Location>,
}

#[derive(Deserialize)]
struct RuleReference {
    id: Option<String>,
    index: Option<usize>,
}

#[derive(Deserialize)]
struct Message {
    text: Option<String>,
    markdown: Option<String>,
    id: Option<String>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct Location {
    physical_location: Option<PhysicalLocation>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct PhysicalLocation {
    artifact_location: Option<ArtifactLocation>,
    region: Option<Region>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct Region {
    start_line: Option<i64>,
}

pub struct SarifParser;

impl Run {
    fn rule(&self, r: &SarifResult) -> Option<&ReportingDescriptor> {
        let rules = &self.tool.driver.rules;
        let index = r.rule_index.or_else(|| r.rule.as_ref().and_then(|x| x.index));
        if let Some(i) = index {
            return rules.get(i);
        }
        let id = self.rule_id(r)?;
        rules.iter().find(|d| d.id == id)
    }

    fn rule_id(&self, r: &SarifResult) -> Option<String> {
        r.rule_id.clone().or_else(|| r.rule.as_ref().and_then(|x| x.id.clone())).or_else(|| {
            let i = r.rule_index.or_else(|| r.rule.as_ref().and_then(|x| x.index))?;
            self.tool.driver.rules.get(i).map(|d| d.id.clone())
        })
    }

    fn message(&self, r: &SarifResult) -> String {
        if let Some(text) = r.message.text.clone().or_else(|| r.message.markdown.clone()) {
            return text;
        }
        r.message.id.as_ref().and_then(|id| self.rule(r)?.message_strings.get(id)?.text.clone()).unwrap_or_default()
    }

    /// URI of the first physical location, with `uriBaseId` and artifact
    /// indices resolved.
    fn location(&self, r: &SarifResult) -> (String, Option<i64>) {
        let Some(phys) = r.locations.iter().find_map(|l| l.physical_location.as_ref()) else {
            return (String::new(), None);
        };
        let line = phys.region.as_ref().and_then(|reg| reg.start_line);
        let mut loc = phys.artifact_location.clone().unwrap_or_default();
        if loc.uri.is_none() {
            if let Some(art) = loc.index.and_then(|i| self.artifacts.get(i)) {
                if let Some(art_loc) = &art.location {
                    loc = art_loc.clone();
                }
            }
        }
        let uri = loc.uri.unwrap_or_default();
        let resolved = match loc.uri_base_id.and_then(|b| self.original_uri_base_ids.get(&b)) {
            Some(base) if !uri.contains("://") => {
                let base = base.uri.clone().unwrap_or_default();
                if base.ends_with('/') || base.is_empty() {
                    format!("{base}{uri}")
                } else {
                    format!("{base}/{uri}")
                }
            }
            _ => uri,
        };
        (resolved, line)
    }
}

impl ReportParser for SarifParser {
    fn format(&self) -> ReportFormat {
        ReportFormat::Sarif
    }

    fn parse(&self, payload: &[u8]) -> Result<Vec<ToolFinding>, IngestError> {
        let log: SarifLog = serde_json::from_slice(payload).map_err(|e| IngestError::malformed(self.format(), e))?;
        if log.version != "2.1.0" {
            return Err(IngestError::malformed(self.format(), format!("unsupported SARIF version {:?}", log.version)));
        }
        let mut out = Vec::new();
        for run in &log.runs {
            for r in run.results.iter().flatten() {
                let (path, line) = run.location(r);
                out.push(ToolFinding {
                    message: run.message(r),
                    path,
                    line,
                    severity: r.level.clone(),
                    type_tag: run.rule_id(r),
                });
            }
        }
        Ok(out)
    }
}
