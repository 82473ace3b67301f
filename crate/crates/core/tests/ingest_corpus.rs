//! Every report in tests/fixtures/reports is parsed and compared with its
//! hand-written `.expected.json`.

mod common;

use std::path::Path;
use std::time::Duration;

use common::corpus::{check_dir, raw, reports, FORMATS, ROOT};
use sastwatch::harness::{RawReport, ReportFormat};
use sastwatch::ingest::{IngestError, ParserRegistry};

#[test]
fn builtin_corpus() {
    check_dir("builtin");
}

#[test]
fn pmd_corpus() {
    check_dir("pmd");
}

#[test]
fn infer_corpus() {
    check_dir("infer");
}

#[test]
fn sarif_corpus() {
    check_dir("sarif");
}

#[test]
fn formats_without_parser_are_unknown() {
    let registry = ParserRegistry::default();
    for format in [ReportFormat::FlowdroidXml, ReportFormat::MobsfJson, ReportFormat::XanitizerXml] {
        let raw = RawReport {
            tool_name: "x".into(),
            format,
            payload: b"<report/>".to_vec(),
            exit_code: 0,
            duration: Duration::ZERO,
        };
        assert_eq!(registry.parse(&raw, Path::new(ROOT)).unwrap_err(), IngestError::UnknownFormat(format));
    }
}

#[test]
fn parsing_is_deterministic() {
    let registry = ParserRegistry::default();
    for dir in FORMATS {
        for path in reports(dir) {
            let a = registry.parse(&raw(dir, &path), Path::new(ROOT)).ok();
            let b = registry.parse(&raw(dir, &path), Path::new(ROOT)).ok();
            assert_eq!(a, b);
        }
    }
}
