//! Parser conformance against tests/fixtures/reports. Fingerprints in the
//! expected files come from tests/fixtures/fingerprint_golden.py.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use sastwatch::harness::{RawReport, ReportFormat};
use sastwatch::ingest::{mark_duplicates, IngestError, ParserRegistry};
use serde::Deserialize;

pub const FORMATS: [&str; 4] = ["builtin", "pmd", "infer", "sarif"];

pub const ROOT: &str = "/work/checkout";

#[derive(Deserialize)]
struct Expected {
    dropped: usize,
    warnings: Vec<ExpectedWarning>,
}

#[derive(Deserialize, Debug, PartialEq)]
struct ExpectedWarning {
    message: String,
    path: String,
    line: Option<u32>,
    severity: Option<String>,
    type_tag: Option<String>,
    duplicate: bool,
    fingerprint: String,
}

pub fn format_of(dir: &str) -> ReportFormat {
    match dir {
        "builtin" => ReportFormat::BuiltinJson,
        "pmd" => ReportFormat::PmdJson,
        "infer" => ReportFormat::InferJson,
        "sarif" => ReportFormat::Sarif,
        other => panic!("unexpected fixture directory {other}"),
    }
}

pub fn reports(dir: &str) -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = fs::read_dir(super::fixtures().join("reports").join(dir))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| !p.to_string_lossy().ends_with(".expected.json"))
        .collect();
    out.sort();
    out
}

pub fn raw(dir: &str, path: &Path) -> RawReport {
    RawReport {
        tool_name: dir.into(),
        format: format_of(dir),
        payload: fs::read(path).unwrap(),
        exit_code: 0,
        duration: Duration::ZERO,
    }
}

pub fn check_dir(dir: &str) {
    let registry = ParserRegistry::default();
    let (mut good, mut bad) = (0, 0);
    for path in reports(dir) {
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let result = registry.parse(&raw(dir, &path), Path::new(ROOT));
        if name.starts_with("malformed-") {
            match result {
                Err(IngestError::MalformedReport { format, .. }) => assert_eq!(format, format_of(dir), "{name}"),
                other => panic!("{dir}/{name}: expected MalformedReport, got {other:?}"),
            }
            bad += 1;
            continue;
        }
        let expected: Expected =
            serde_json::from_slice(&fs::read(path.with_extension("expected.json")).unwrap()).unwrap();
        let (warnings, dropped) = result.unwrap_or_else(|e| panic!("{dir}/{name}: {e}"));
        let got: Vec<ExpectedWarning> = mark_duplicates(warnings)
            .into_iter()
            .map(|w| ExpectedWarning {
                message: w.message,
                path: w.path,
                line: w.line,
                severity: w.severity,
                type_tag: w.type_tag,
                duplicate: w.duplicate,
                fingerprint: format!("{:016x}", w.fingerprint),
            })
            .collect();
        assert_eq!(got, expected.warnings, "{dir}/{name}");
        assert_eq!(dropped, expected.dropped, "{dir}/{name}: dropped");
        good += 1;
    }
    assert!(good >= 3, "{dir}: need at least three well-formed reports");
    assert!(bad >= 1, "{dir}: need malformed variants");
}
