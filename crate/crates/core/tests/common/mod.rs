#![allow(dead_code)]

pub mod corpus;
pub mod oracle;
pub mod schema;

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::{Path, PathBuf};
use std::time::Duration;

use sastwatch::harness::{ReportFormat, Runner, ToolSpec};
use sastwatch::service::{PlatformConfig, RepoConfig};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// A shell tool whose template is run verbatim.
pub fn shell_tool(name: &str, template: &str, format: ReportFormat) -> ToolSpec {
    ToolSpec {
        name: name.into(),
        category: "test".into(),
        languages: vec!["any".into()],
        invocation_template: template.into(),
        report_format: format,
        version: "1".into(),
        runner: Runner::Shell,
        success_exit_codes: vec![0],
        report_path: None,
    }
}

/// One Java repository, builtin tool only, everything under `dir`.
pub fn config_for(dir: &Path, git_url: &str) -> PlatformConfig {
    let repo = RepoConfig { git_url: git_url.into(), branch: None, languages: vec!["java".into()] };
    PlatformConfig::new(vec![repo], dir.join("sast.db").to_string_lossy().into_owned(), dir.join("work"))
}

pub struct HttpResponse {
    pub status: u16,
    pub headers: String,
    pub body: String,
}

impl HttpResponse {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_str(&self.body).unwrap_or_else(|e| panic!("non-JSON body {:?}: {e}", self.body))
    }

    pub fn header(&self, name: &str) -> Option<String> {
        self.headers.lines().find_map(|l| {
            let (k, v) = l.split_once(':')?;
            k.trim().eq_ignore_ascii_case(name).then(|| v.trim().to_string())
        })
    }
}

/// Minimal HTTP/1.1 GET; the server is asked to close the connection so the
/// body is everything after the headers (no chunked encoding for JSON).
pub fn http_get(addr: SocketAddr, path: &str) -> HttpResponse {
    let mut stream = TcpStream::connect(addr).expect("connect");
    stream.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
    write!(stream, "GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut raw = Vec::new();
    stream.read_to_end(&mut raw).expect("read response");
    let text = String::from_utf8(raw).expect("utf-8 response");
    let (head, body) = text.split_once("\r\n\r\n").expect("header terminator");
    let (status_line, headers) = head.split_once("\r\n").unwrap_or((head, ""));
    let status = status_line.split_whitespace().nth(1).and_then(|s| s.parse().ok()).expect("status");
    let body = if headers.to_ascii_lowercase().contains("transfer-encoding: chunked") {
        dechunk(body)
    } else {
        body.to_string()
    };
    HttpResponse { status, headers: headers.to_string(), body }
}

fn dechunk(mut s: &str) -> String {
    let mut out = String::new();
    loop {
        let (size, rest) = s.split_once("\r\n").expect("chunk size");
        let n = usize::from_str_radix(size.trim(), 16).expect("hex chunk size");
        if n == 0 {
            return out;
        }
        out.push_str(&rest[..n]);
        s = &rest[n + 2..];
    }
}
