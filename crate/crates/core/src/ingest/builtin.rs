use super::{IngestError, ReportParser, ToolFinding};
use crate::harness::{BuiltinFinding, ReportFormat};

pub struct BuiltinParser;

impl ReportParser for BuiltinParser {
    fn format(&self) -> ReportFormat {
        ReportFormat::BuiltinJson
    }

    fn parse(&self, payload: &[u8]) -> Result<Vec<ToolFinding>, IngestError> {
        let findings: Vec<BuiltinFinding> =
            serde_json::from_slice(payload).map_err(|e| IngestError::malformed(self.format(), e))?;
        Ok(findings
            .into_iter()
            .map(|f| ToolFinding {
                message: f.message,
                path: f.path,
                line: Some(i64::from(f.line)),
                severity: Some(f.severity),
                type_tag: Some(f.type_tag),
            })
            .collect())
    }
}
