//! Infer `report.json`: a flat array of issues.

use serde::Deserialize;

use super::{IngestError, ReportParser, ToolFinding};
use crate::harness::ReportFormat;

#[derive(Deserialize)]
struct InferIssue {
    bug_type: String,
    qualifier: String,
    severity: Option<String>,
    line: Option<i64>,
    file: String,
}

pub struct InferParser;

impl ReportParser for InferParser {
    fn format(&self) -> ReportFormat {
        ReportFormat::InferJson
    }

    fn parse(&self, payload: &[u8]) -> Result<Vec<ToolFinding>, IngestError> {
        let issues: Vec<InferIssue> =
            serde_json::from_slice(payload).map_err(|e| IngestError::malformed(self.format(), e))?;
        Ok(issues
            .into_iter()
            .map(|i| ToolFinding {
                message: i.qualifier,
                path: i.file,
                line: i.line,
                severity: i.severity,
                type_tag: Some(i.bug_type),
            })
            .collect())
    }
}
