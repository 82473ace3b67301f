//! Repository acquisition, history enumeration and clean snapshot extraction.
//!
//! Everything goes through the system `git` binary. A repository lives under
//! `<workdir>/<name>/`: `repo.git` is a mirror clone with every ref, `tree/`
//! is the currently materialized snapshot.

use std::ffi::OsStr;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::{DateTime, FixedOffset};
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::{self, Exec};

/// Files whose first bytes contain a NUL are treated as binary.
const BINARY_SNIFF_LEN: usize = 8000;

#[derive(Debug, Error)]
pub enum VcsError {
    #[error("invalid git url {0:?}")]
    InvalidUrl(String),
    #[error("cannot reach {url}: {detail}")]
    Network { url: String, detail: String },
    #[error("unknown branch {0:?}")]
    UnknownBranch(String),
    #[error("unknown commit {0:?}")]
    UnknownCommit(String),
    #[error("git {command} failed: {detail}")]
    Git { command: String, detail: String },
    #[error("malformed git output: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl VcsError {
    /// Whether retrying the same operation later may succeed.
    pub fn is_retryable(&self) -> bool {
        matches!(self, VcsError::Network { .. } | VcsError::Io(_))
    }
}

/// A cloned repository.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoRef {
    pub url: String,
    pub name: String,
    /// `<workdir>/<name>`; holds the mirror clone and the checkout tree.
    pub workdir: PathBuf,
}

impl RepoRef {
    pub fn git_dir(&self) -> PathBuf {
        self.workdir.join("repo.git")
    }

    pub fn tree_dir(&self) -> PathBuf {
        self.workdir.join("tree")
    }

    /// Scratch space for tool reports; never inside the checkout tree.
    pub fn scratch_dir(&self) -> PathBuf {
        self.workdir.join("scratch")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitMeta {
    pub hash: String,
    pub author_date: DateTime<FixedOffset>,
    pub author_name: String,
    pub message: String,
    pub branch: String,
}

/// A materialized working tree for one commit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckoutPath {
    pub root: PathBuf,
    pub commit: String,
    /// Repo-relative paths of the regular files tracked at `commit`, sorted.
    pub tracked: Vec<String>,
}

impl CheckoutPath {
    /// A checkout backed by a plain directory; every regular file below
    /// `root` counts as tracked. Used for trees that do not come from git.
    pub fn from_dir(root: impl Into<PathBuf>, commit: impl Into<String>) -> std::io::Result<Self> {
        let root = root.into();
        let mut tracked = Vec::new();
        collect_files(&root, &root, &mut tracked)?;
        tracked.sort();
        Ok(CheckoutPath { root, commit: commit.into(), tracked })
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let ty = entry.file_type()?;
        let path = entry.path();
        if ty.is_dir() {
            collect_files(root, &path, out)?;
        } else if ty.is_file() {
            if let Ok(rel) = path.strip_prefix(root) {
                out.push(rel_to_slash(rel));
            }
        }
    }
    Ok(())
}

pub(crate) fn rel_to_slash(rel: &Path) -> String {
    rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

fn git<I, S>(git_dir: Option<&Path>, args: I) -> Command
where
    I: IntoIterator<Item = S>,
    S: AsRef<OsStr>,
{
    let mut cmd = Command::new("git");
    if let Some(dir) = git_dir {
        cmd.arg("--git-dir").arg(dir);
    }
    cmd.args(args).env("GIT_TERMINAL_PROMPT", "0").env("LC_ALL", "C");
    cmd
}

fn run_git(mut cmd: Command, what: &str) -> Result<Output, VcsError> {
    let out = cmd.output()?;
    if out.status.success() {
        Ok(out)
    } else {
        Err(VcsError::Git {
            command: what.to_string(),
            detail: String::from_utf8_lossy(&out.stderr).trim().to_string(),
        })
    }
}

/// Check that `url` looks like something `git clone` accepts and derive the
/// short repository name from its last path segment.
pub fn repo_name_from_url(url: &str) -> Result<String, VcsError> {
    let invalid = || VcsError::InvalidUrl(url.to_string());
    if url.is_empty() || url.chars().any(char::is_whitespace) {
        return Err(invalid());
    }
    let path = if let Ok(parsed) = url::Url::parse(url) {
        match parsed.scheme() {
            "file" | "http" | "https" | "ssh" | "git" => parsed.path().to_string(),
            _ => return Err(invalid()),
        }
    } else if url.starts_with('/') {
        url.to_string()
    } else {
        let scp = Regex::new(r"^[A-Za-z0-9._~-]+@[A-Za-z0-9.-]+:(.+)$").expect("static regex");
        match scp.captures(url) {
            Some(c) => c[1].to_string(),
            None => return Err(invalid()),
        }
    };
    let last = path.trim_end_matches('/').rsplit('/').next().unwrap_or("");
    let name = last.strip_suffix(".git").unwrap_or(last);
    if name.is_empty() || name == "." || name == ".." || name.contains('\\') {
        return Err(invalid());
    }
    Ok(name.to_string())
}

/// Clone `url` as a mirror under `workdir`, or fetch new refs if it is
/// already there.
pub fn clone_or_fetch(url: &str, workdir: &Path) -> Result<RepoRef, VcsError> {
    let name = repo_name_from_url(url)?;
    let workdir = std::path::absolute(workdir)?;
    let repo = RepoRef { url: url.to_string(), workdir: workdir.join(&name), name };
    let git_dir = repo.git_dir();
    let network = |e: VcsError| match e {
        VcsError::Git { detail, .. } => VcsError::Network { url: url.to_string(), detail },
        other => other,
    };
    if git_dir.join("HEAD").is_file() {
        tracing::debug!(repo = %repo.name, "fetching");
        run_git(git(Some(&git_dir), ["fetch", "--prune", "--quiet", "origin"]), "fetch").map_err(network)?;
    } else {
        fs::create_dir_all(&repo.workdir)?;
        if git_dir.exists() {
            fs::remove_dir_all(&git_dir)?;
        }
        tracing::info!(repo = %repo.name, url, "cloning");
        let mut cmd = git(None, ["clone", "--mirror", "--quiet", url]);
        cmd.arg(&git_dir);
        if let Err(e) = run_git(cmd, "clone") {
            let _ = fs::remove_dir_all(&git_dir);
            return Err(network(e));
        }
    }
    Ok(repo)
}

/// The branch the remote's HEAD points at.
pub fn default_branch(repo: &RepoRef) -> Result<String, VcsError> {
    let out = run_git(git(Some(&repo.git_dir()), ["symbolic-ref", "--short", "HEAD"]), "symbolic-ref")?;
    Ok(String::from_utf8_lossy(&out.stdout).trim().to_string())
}

/// Every commit reachable from `branch`, ordered by (author date, hash).
pub fn list_commits(repo: &RepoRef, branch: &str) -> Result<Vec<CommitMeta>, VcsError> {
    let git_dir = repo.git_dir();
    let reference = format!("refs/heads/{branch}");
    let probe =
        git(Some(&git_dir), ["rev-parse", "--verify", "--quiet", &format!("{reference}^{{commit}}")]).output()?;
    if !probe.status.success() {
        return Err(VcsError::UnknownBranch(branch.to_string()));
    }

    let out =
        run_git(git(Some(&git_dir), ["log", "--no-color", "--format=%H%x1f%aI%x1f%an%x1f%B%x1e", &reference]), "log")?;
    let text = String::from_utf8_lossy(&out.stdout);
    let mut commits = Vec::new();
    for record in text.split('\x1e') {
        let record = record.trim_start_matches('\n');
        if record.is_empty() {
            continue;
        }
        let mut fields = record.splitn(4, '\x1f');
        let (Some(hash), Some(date), Some(author), Some(message)) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(VcsError::Parse(format!("log record {record:?}")));
        };
        let author_date =
            DateTime::parse_from_rfc3339(date).map_err(|e| VcsError::Parse(format!("author date {date:?}: {e}")))?;
        commits.push(CommitMeta {
            hash: hash.to_string(),
            author_date,
            author_name: author.to_string(),
            message: message.trim_end_matches('\n').to_string(),
            branch: branch.to_string(),
        });
    }
    sort_chronologically(&mut commits);
    Ok(commits)
}

pub fn sort_chronologically(commits: &mut [CommitMeta]) {
    commits.sort_by(|a, b| a.author_date.cmp(&b.author_date).then_with(|| a.hash.cmp(&b.hash)));
}

fn is_commit_id(hash: &str) -> bool {
    hash.len() == 40 && hash.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

/// Replace the checkout tree with a fresh extraction of `hash`.
///
/// The previous tree, including build outputs and untracked files, is
/// deleted first.
pub fn checkout_snapshot(repo: &RepoRef, hash: &str) -> Result<CheckoutPath, VcsError> {
    let git_dir = repo.git_dir();
    if !is_commit_id(hash) {
        return Err(VcsError::UnknownCommit(hash.to_string()));
    }
    let exists = git(Some(&git_dir), ["cat-file", "-e", &format!("{hash}^{{commit}}")]).output()?.status.success();
    if !exists {
        return Err(VcsError::UnknownCommit(hash.to_string()));
    }

    let root = repo.tree_dir();
    if root.exists() {
        fs::remove_dir_all(&root)?;
    }
    fs::create_dir_all(&root)?;

    let index = repo.workdir.join("checkout.index");
    let _ = fs::remove_file(&index);
    let mut read_tree = git(Some(&git_dir), ["read-tree", hash]);
    read_tree.env("GIT_INDEX_FILE", &index);
    run_git(read_tree, "read-tree")?;
    let mut extract = git(Some(&git_dir), ["checkout-index", "--all", "--force"]);
    extract.env("GIT_INDEX_FILE", &index).env("GIT_WORK_TREE", &root).current_dir(&root);
    let extracted = run_git(extract, "checkout-index");
    let _ = fs::remove_file(&index);
    extracted?;

    let tracked = tracked_files(repo, hash)?;
    Ok(CheckoutPath { root, commit: hash.to_string(), tracked })
}

/// Regular files (not symlinks or submodules) in the tree of `hash`.
fn tracked_files(repo: &RepoRef, hash: &str) -> Result<Vec<String>, VcsError> {
    let out = run_git(git(Some(&repo.git_dir()), ["ls-tree", "-r", "-z", "--full-tree", hash]), "ls-tree")?;
    let mut files = Vec::new();
    for entry in out.stdout.split(|&b| b == 0) {
        if entry.is_empty() {
            continue;
        }
        let entry = String::from_utf8_lossy(entry);
        let (meta, path) = entry.split_once('\t').ok_or_else(|| VcsError::Parse(format!("ls-tree entry {entry:?}")))?;
        let mode = meta.split(' ').next().unwrap_or("");
        if mode == "100644" || mode == "100755" {
            files.push(path.to_string());
        }
    }
    files.sort();
    Ok(files)
}

pub(crate) fn is_binary(head: &[u8]) -> bool {
    head.iter().take(BINARY_SNIFF_LEN).any(|&b| b == 0)
}

/// Read a tracked file; `None` for unreadable or binary files.
pub(crate) fn read_text(root: &Path, rel: &str) -> Option<Vec<u8>> {
    let path = root.join(rel);
    let mut buf = Vec::new();
    match fs::File::open(&path).and_then(|mut f| f.read_to_end(&mut buf)) {
        Ok(_) if is_binary(&buf) => None,
        Ok(_) => Some(buf),
        Err(e) => {
            tracing::warn!(path = %path.display(), error = %e, "unreadable file skipped");
            None
        }
    }
}

/// Number of lines containing at least one non-whitespace character.
pub fn count_nonblank_lines(content: &[u8]) -> u64 {
    content.split(|&b| b == b'\n').filter(|line| line.iter().any(|b| !b.is_ascii_whitespace())).count() as u64
}

/// Lines of code: non-blank lines across all tracked text files.
pub fn measure_loc(checkout: &CheckoutPath) -> u64 {
    measure_loc_with(checkout, Exec::default())
}

pub fn measure_loc_with(checkout: &CheckoutPath, exec: Exec) -> u64 {
    par::map(exec, &checkout.tracked, |rel| read_text(&checkout.root, rel).map_or(0, |c| count_nonblank_lines(&c)))
        .into_iter()
        .sum()
}
