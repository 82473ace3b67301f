//! Running one analyzer against one checkout.

use std::fs::{self, File};
use std::io::Read;
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Instant;

use regex::Regex;
use wait_timeout::ChildExt;

use super::build::shell_quote;
use super::builtin::{builtin_scan, default_ruleset};
use super::{BuildSystem, HarnessError, RawReport, Runner, ToolSpec};
use crate::planner::RetryPolicy;
use crate::vcs::CheckoutPath;

const STDERR_TAIL: usize = 2000;

/// Words that `sh` resolves itself, so a PATH lookup would be wrong.
const SHELL_BUILTINS: &[&str] =
    &["true", "false", "exit", "echo", "printf", "cd", "test", "[", ":", "eval", "exec", "sh"];

/// Execute `spec` on `checkout`. Reports and the tool's working directory live
/// under `scratch`, which is wiped first and must be outside the checkout.
pub fn invoke_tool(
    spec: &ToolSpec,
    checkout: &CheckoutPath,
    build: &BuildSystem,
    policy: &RetryPolicy,
    scratch: &Path,
) -> Result<RawReport, HarnessError> {
    match spec.runner {
        Runner::Builtin => {
            let mut report = builtin_scan(checkout, &default_ruleset());
            report.tool_name = spec.name.clone();
            return Ok(report);
        }
        Runner::Unsupported => return Err(HarnessError::Unsupported(spec.name.clone())),
        Runner::Shell => {}
    }

    if spec.requires_build() && build.kind == super::BuildKind::None {
        return Err(HarnessError::MissingBuild(spec.name.clone()));
    }

    if scratch.exists() {
        fs::remove_dir_all(scratch)?;
    }
    let work = scratch.join("work");
    let results = scratch.join("results");
    fs::create_dir_all(&work)?;
    fs::create_dir_all(&results)?;
    let report_out = scratch.join("report.out");

    let template = &spec.invocation_template;
    let build_config = build.build_command(&checkout.root).unwrap_or_default();
    let command = render(spec, &checkout.root, &report_out, &results, &build_config)?;

    if let Some(program) = first_word(&command) {
        if !SHELL_BUILTINS.contains(&program.as_str()) && !program_exists(&program) {
            return Err(HarnessError::ToolNotInstalled(program));
        }
    }

    let stdout_path = scratch.join("stdout");
    let stderr_path = scratch.join("stderr");
    let started = Instant::now();
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(&command)
        .current_dir(&work)
        .env("SASTWATCH_CHECKOUT", &checkout.root)
        .env("SASTWATCH_REPORT_OUT", &report_out)
        .env("SASTWATCH_BUILD_CONFIG", &build_config)
        .stdin(Stdio::null())
        .stdout(File::create(&stdout_path)?)
        .stderr(File::create(&stderr_path)?)
        .process_group(0)
        .spawn()?;

    let status = match child.wait_timeout(policy.per_run_timeout)? {
        Some(status) => status,
        None => {
            // Kill the whole group: `sh -c` may have forked the real tool.
            unsafe {
                libc::killpg(child.id() as libc::pid_t, libc::SIGKILL);
            }
            let _ = child.wait();
            return Err(HarnessError::Timeout(policy.per_run_timeout));
        }
    };
    let duration = started.elapsed();
    let code = status.code().unwrap_or(-1);
    let stderr = tail(&stderr_path);

    if code == 127 {
        return Err(HarnessError::ToolNotInstalled(first_word(&command).unwrap_or_else(|| command.clone())));
    }
    if !spec.success_exit_codes.contains(&code) {
        return Err(HarnessError::NonzeroExit { code, stderr });
    }

    let report_file = report_location(spec, template, &report_out, &results, &work, &stdout_path);
    let payload = fs::read(&report_file).map_err(|_| HarnessError::ReportMissing(report_file.display().to_string()))?;
    tracing::debug!(tool = %spec.name, code, bytes = payload.len(), "tool finished");
    Ok(RawReport { tool_name: spec.name.clone(), format: spec.report_format, payload, exit_code: code, duration })
}

fn render(
    spec: &ToolSpec,
    checkout: &Path,
    report_out: &Path,
    results: &Path,
    build_config: &str,
) -> Result<String, HarnessError> {
    let placeholder = Regex::new(r"\{([A-Za-z_]+)\}").expect("static regex");
    let mut unresolved = None;
    let rendered = placeholder.replace_all(&spec.invocation_template, |c: &regex::Captures| match &c[1] {
        "checkout" => shell_quote(&checkout.to_string_lossy()),
        "report_out" => shell_quote(&report_out.to_string_lossy()),
        "resultDir" => shell_quote(&results.to_string_lossy()),
        "build_config" | "compileConfig" => build_config.to_string(),
        other => {
            unresolved.get_or_insert_with(|| format!("{{{other}}}"));
            String::new()
        }
    });
    match unresolved {
        Some(p) => Err(HarnessError::UnresolvedPlaceholder { tool: spec.name.clone(), placeholder: p }),
        None => Ok(rendered.into_owned()),
    }
}

fn report_location(
    spec: &ToolSpec,
    template: &str,
    report_out: &Path,
    results: &Path,
    work: &Path,
    stdout: &Path,
) -> PathBuf {
    if let Some(rel) = &spec.report_path {
        work.join(rel)
    } else if template.contains("{report_out}") {
        report_out.to_path_buf()
    } else if template.contains("{resultDir}") {
        results.join("report.json")
    } else {
        stdout.to_path_buf()
    }
}

fn first_word(command: &str) -> Option<String> {
    let word = command.split_whitespace().next()?;
    // Leading VAR=value assignments are not programs.
    if word.contains('=') {
        return None;
    }
    Some(word.trim_matches('\'').to_string())
}

fn program_exists(program: &str) -> bool {
    if program.contains('/') {
        return Path::new(program).is_file();
    }
    std::env::var_os("PATH")
        .map(|paths| std::env::split_paths(&paths).any(|dir| dir.join(program).is_file()))
        .unwrap_or(false)
}

fn tail(path: &Path) -> String {
    let mut buf = Vec::new();
    let _ = File::open(path).and_then(|mut f| f.read_to_end(&mut buf));
    let start = buf.len().saturating_sub(STDERR_TAIL);
    String::from_utf8_lossy(&buf[start..]).trim().to_string()
}
