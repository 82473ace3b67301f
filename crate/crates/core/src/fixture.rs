//! Scripted git repositories for tests, benchmarks and demos.
//!
//! A [`FixtureRepo`] is an ordinary working repository whose commits carry
//! explicit author and committer dates, so histories are reproducible.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::Command;

use chrono::{DateTime, Duration, FixedOffset};

pub struct FixtureRepo {
    dir: PathBuf,
}

fn io_err(msg: String) -> io::Error {
    io::Error::other(msg)
}

impl FixtureRepo {
    /// `git init` a new repository with default branch `main`.
    pub fn init(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let repo = FixtureRepo { dir };
        repo.git(&["init", "--quiet", "-b", "main"], None)?;
        Ok(repo)
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn url(&self) -> String {
        format!("file://{}", self.dir.display())
    }

    pub fn write(&self, rel: &str, content: impl AsRef<[u8]>) -> io::Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, content)
    }

    pub fn remove(&self, rel: &str) -> io::Result<()> {
        fs::remove_file(self.dir.join(rel))
    }

    /// Remove every tracked and untracked file except `.git`.
    pub fn clear(&self) -> io::Result<()> {
        for entry in fs::read_dir(&self.dir)? {
            let entry = entry?;
            if entry.file_name() == ".git" {
                continue;
            }
            if entry.file_type()?.is_dir() {
                fs::remove_dir_all(entry.path())?;
            } else {
                fs::remove_file(entry.path())?;
            }
        }
        Ok(())
    }

    /// Stage everything and commit with the given author date (RFC 3339).
    /// Returns the new commit hash.
    pub fn commit(&self, message: &str, author: &str, date: &str) -> io::Result<String> {
        self.git(&["add", "--all"], None)?;
        self.git(&["commit", "--quiet", "--allow-empty", "--no-verify", "-m", message], Some((author, date)))?;
        self.head()
    }

    pub fn head(&self) -> io::Result<String> {
        let out = self.git(&["rev-parse", "HEAD"], None)?;
        Ok(out.trim().to_string())
    }

    pub fn checkout_new_branch(&self, name: &str) -> io::Result<()> {
        self.git(&["checkout", "--quiet", "-b", name], None).map(|_| ())
    }

    pub fn checkout(&self, name: &str) -> io::Result<()> {
        self.git(&["checkout", "--quiet", name], None).map(|_| ())
    }

    fn git(&self, args: &[&str], author: Option<(&str, &str)>) -> io::Result<String> {
        let mut cmd = Command::new("git");
        cmd.arg("-C")
            .arg(&self.dir)
            .args(["-c", "user.email=fixture@example.invalid", "-c", "user.name=fixture"])
            .args(["-c", "commit.gpgsign=false", "-c", "core.autocrlf=false"])
            .args(args)
            .env("GIT_CONFIG_NOSYSTEM", "1")
            .env("GIT_TERMINAL_PROMPT", "0");
        if let Some((name, date)) = author {
            cmd.env("GIT_AUTHOR_NAME", name)
                .env("GIT_AUTHOR_EMAIL", format!("{}@example.invalid", name.replace(' ', ".")))
                .env("GIT_AUTHOR_DATE", date)
                .env("GIT_COMMITTER_NAME", name)
                .env("GIT_COMMITTER_EMAIL", "fixture@example.invalid")
                .env("GIT_COMMITTER_DATE", date);
        }
        let out = cmd.output()?;
        if !out.status.success() {
            return Err(io_err(format!("git {:?} failed: {}", args, String::from_utf8_lossy(&out.stderr))));
        }
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    }
}

/// First author date used by [`SeededHistory`].
pub const SEED_EPOCH: &str = "2021-03-01T09:00:00+01:00";

/// Directories the seeded credential findings are spread over.
pub const SEED_DIRS: [&str; 3] = ["src/main/java/app", "src/main/java/app/db", "lib"];

/// A repository whose commit `i` contains exactly `counts[i]` lines matching
/// the builtin `hardcoded-credential` rule and nothing matching any other
/// builtin rule.
pub struct SeededHistory {
    pub repo: FixtureRepo,
    pub counts: Vec<usize>,
    pub hashes: Vec<String>,
}

impl SeededHistory {
    pub fn create(dir: impl Into<PathBuf>, counts: &[usize]) -> io::Result<Self> {
        let repo = FixtureRepo::init(dir)?;
        let mut seeded = SeededHistory { repo, counts: Vec::new(), hashes: Vec::new() };
        for &count in counts {
            seeded.append(count)?;
        }
        Ok(seeded)
    }

    /// Author date of the `i`-th commit: one hour apart.
    pub fn date_of(i: usize) -> DateTime<FixedOffset> {
        DateTime::parse_from_rfc3339(SEED_EPOCH).expect("valid epoch") + Duration::hours(i as i64)
    }

    /// Commit a new snapshot with `count` credential findings.
    pub fn append(&mut self, count: usize) -> io::Result<String> {
        let i = self.counts.len();
        self.repo.clear()?;
        write_snapshot(&self.repo, i, count)?;
        let hash = self.repo.commit(
            &format!("snapshot {i}: {count} seeded findings"),
            if i.is_multiple_of(2) { "Ada Lovelace" } else { "Grace Hopper" },
            &Self::date_of(i).to_rfc3339(),
        )?;
        self.counts.push(count);
        self.hashes.push(hash.clone());
        Ok(hash)
    }
}

/// Lay out one snapshot: a build file, benign sources, and `count` seeded
/// credential assignments spread round-robin over [`SEED_DIRS`].
fn write_snapshot(repo: &FixtureRepo, index: usize, count: usize) -> io::Result<()> {
    repo.write("pom.xml", "<project>\n  <modelVersion>4.0.0</modelVersion>\n</project>\n")?;
    repo.write("README.md", format!("# fixture\n\nrevision {index}\n"))?;
    repo.write(
        "src/main/java/app/Main.java",
        "package app;\n\npublic class Main {\n    public static void main(String[] args) {\n        System.out.println(\"hello\");\n    }\n}\n",
    )?;
    let mut per_dir = vec![Vec::new(); SEED_DIRS.len()];
    for k in 0..count {
        per_dir[k % SEED_DIRS.len()].push(k);
    }
    for (d, ks) in per_dir.iter().enumerate() {
        if ks.is_empty() {
            continue;
        }
        let mut body = String::from("class Secrets {\n");
        for &k in ks {
            body.push_str(&format!("    // entry {k}\n"));
            body.push_str(&format!("    String password = \"secret-{index}-{k}\";\n\n"));
        }
        body.push_str("}\n");
        repo.write(&format!("{}/Secrets{d}.java", SEED_DIRS[d]), body)?;
    }
    Ok(())
}
