//! Built-in tool registry.
//!
//! The five external analyzers carry their stock command lines unchanged.
//! Their versions are left as `unspecified`; deployments override them in the
//! config file so the tool table records what actually ran.

use super::{ReportFormat, Runner, ToolSpec};

pub const UNSPECIFIED_VERSION: &str = "unspecified";

fn spec(name: &str, category: &str, languages: &[&str], template: &str, format: ReportFormat) -> ToolSpec {
    ToolSpec {
        name: name.to_string(),
        category: category.to_string(),
        languages: languages.iter().map(|s| s.to_string()).collect(),
        invocation_template: template.to_string(),
        report_format: format,
        version: UNSPECIFIED_VERSION.to_string(),
        runner: Runner::Shell,
        success_exit_codes: vec![0],
        report_path: None,
    }
}

pub fn builtin_spec() -> ToolSpec {
    ToolSpec {
        runner: Runner::Builtin,
        version: env!("CARGO_PKG_VERSION").to_string(),
        ..spec("builtin", "coding rules", &["java", "any"], "builtin-scan --ruleset default", ReportFormat::BuiltinJson)
    }
}

pub fn default_registry() -> Vec<ToolSpec> {
    vec![
        ToolSpec {
            report_path: Some("report.xml".into()),
            ..spec(
                "flowdroid",
                "taint analysis",
                &["android"],
                "java -jar soot.jar -s ./flowdroid/SourcesAndSinks.txt -o report.xml",
                ReportFormat::FlowdroidXml,
            )
        },
        spec(
            "infer",
            "formal verification",
            &["java", "android", "c", "c++", "ios"],
            "infer run --results-dir {resultDir} --no-fail-on-issue -- {compileConfig}",
            ReportFormat::InferJson,
        ),
        ToolSpec {
            runner: Runner::Unsupported,
            report_path: Some("mobsf_report.json".into()),
            ..spec(
                "mobsf",
                "various",
                &["android", "ios", "windows"],
                "mobsf --apikey {Key} upload {Apk} > mobsf_report.json",
                ReportFormat::MobsfJson,
            )
        },
        spec(
            "pmd",
            "coding rules",
            &["java", "javascript"],
            "pmd -R rulesets/java/sunsecure.xml -failOnViolation false -f json",
            ReportFormat::PmdJson,
        ),
        spec(
            "xanitizer",
            "taint analysis",
            &["java", "scala", "javascript", "typescript"],
            "xanitizer  generateDetailsInFindingsListReport=True overwriteConfigFile=True",
            ReportFormat::XanitizerXml,
        ),
        builtin_spec(),
    ]
}
