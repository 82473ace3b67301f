//! PMD 6.x JSON renderer output (`-f json`).

use serde::Deserialize;
use serde_json::Value;

use super::{IngestError, ReportParser, ToolFinding};
use crate::harness::ReportFormat;

#[derive(Deserialize)]
struct PmdReport {
    files: Vec<PmdFile>,
}

#[derive(Deserialize)]
struct PmdFile {
    filename: String,
    #[serde(default)]
    violations: Vec<PmdViolation>,
}

#[derive(Deserialize)]
struct PmdViolation {
    beginline: Option<i64>,
    description: String,
    rule: String,
    priority: Option<Value>,
}

pub struct PmdParser;

impl ReportParser for PmdParser {
    fn format(&self) -> ReportFormat {
        ReportFormat::PmdJson
    }

    fn parse(&self, payload: &[u8]) -> Result<Vec<ToolFinding>, IngestError> {
        let report: PmdReport =
            serde_json::from_slice(payload).map_err(|e| IngestError::malformed(self.format(), e))?;
        let mut out = Vec::new();
        for file in report.files {
            for v in file.violations {
                let severity = match v.priority {
                    None | Some(Value::Null) => None,
                    Some(Value::String(s)) => Some(s),
                    Some(Value::Number(n)) => Some(n.to_string()),
                    Some(other) => {
                        return Err(IngestError::malformed(
                            self.format(),
                            format!("priority must be a number, got {other}"),
                        ))
                    }
                };
                out.push(ToolFinding {
                    message: v.description,
                    path: file.filename.clone(),
                    line: v.beginline,
                    severity,
                    type_tag: Some(v.rule),
                });
            }
        }
        Ok(out)
    }
}
