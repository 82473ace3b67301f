//! Relational warning store (SQLite).
//!
//! One writer (the analysis pipeline) and any number of read-only readers
//! (the API). Each run and its warnings are written in a single transaction.

mod queries;

use std::collections::HashMap;
use std::path::PathBuf;
use std::time::Duration;

use rusqlite::{params, Connection, ErrorCode, OpenFlags, OptionalExtension};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::ToolSpec;
use crate::ingest::ParsedWarning;
use crate::planner::AttemptState;
use crate::vcs::CommitMeta;

pub use queries::{
    module_of, HotspotEntry, TrendPoint, TypeCount, TypeSource, WarningFilter, WarningPage, WarningRow,
    DEFAULT_PAGE_SIZE, MAX_PAGE_SIZE,
};

/// Canonical DDL, also shipped as `schema/sast.sql`.
pub const SCHEMA_SQL: &str = include_str!("../../schema/sast.sql");

pub const TABLES: [&str; 6] = ["repo", "snapshot", "branch", "tool", "run", "warning"];

pub type RepoId = i64;
pub type SnapshotId = i64;
pub type ToolId = i64;
pub type RunId = i64;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("constraint violation: {0}")]
    ConstraintViolation(String),
    #[error("storage unavailable: {0}")]
    StorageUnavailable(String),
    #[error("unknown repository id {0}")]
    UnknownRepo(RepoId),
    #[error("unknown tool id {0}")]
    UnknownTool(ToolId),
    #[error("no successful run at snapshot {0:?}")]
    UnknownSnapshot(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("injected fault")]
    InjectedFault,
    #[error(transparent)]
    Sqlite(rusqlite::Error),
}

impl From<rusqlite::Error> for StoreError {
    fn from(e: rusqlite::Error) -> Self {
        match e.sqlite_error_code() {
            Some(ErrorCode::ConstraintViolation) => StoreError::ConstraintViolation(e.to_string()),
            Some(
                ErrorCode::CannotOpen
                | ErrorCode::NotADatabase
                | ErrorCode::DatabaseBusy
                | ErrorCode::DatabaseLocked
                | ErrorCode::ReadOnly
                | ErrorCode::SystemIoFailure
                | ErrorCode::DiskFull
                | ErrorCode::PermissionDenied,
            ) => StoreError::StorageUnavailable(e.to_string()),
            _ => StoreError::Sqlite(e),
        }
    }
}

/// Where the database lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Dsn {
    Memory,
    File(PathBuf),
}

impl Dsn {
    /// Accepts `sqlite://<path>`, `sqlite:<path>`, `:memory:` or a bare path.
    pub fn parse(dsn: &str) -> Result<Dsn, StoreError> {
        let dsn = dsn.trim();
        let rest = dsn.strip_prefix("sqlite://").or_else(|| dsn.strip_prefix("sqlite:")).unwrap_or(dsn);
        if rest.is_empty() {
            return Err(StoreError::StorageUnavailable("empty storage DSN".into()));
        }
        if rest == ":memory:" {
            return Ok(Dsn::Memory);
        }
        if rest.contains("://") {
            return Err(StoreError::StorageUnavailable(format!("unsupported storage DSN {dsn:?}")));
        }
        Ok(Dsn::File(PathBuf::from(rest)))
    }
}

/// Test hook: make `insert_run` fail part-way through its warning batch.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultPoint {
    /// Return an error after this many warnings were inserted.
    ErrorAfterWarnings(usize),
    /// Abort the process after this many warnings were inserted.
    AbortAfterWarnings(usize),
}

/// Attempt bookkeeping for one run row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunWrite {
    pub tool_id: ToolId,
    pub snapshot_id: SnapshotId,
    pub state: AttemptState,
    pub started_at: String,
    pub duration_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoRow {
    pub id: RepoId,
    pub name: String,
    pub git_url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolRow {
    pub id: ToolId,
    pub name: String,
    pub configuration: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredAttempt {
    pub snapshot_hash: String,
    pub tool_id: ToolId,
    pub state: AttemptState,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoStatus {
    pub snapshots: i64,
    pub runs_succeeded: i64,
    pub runs_failed_pending: i64,
    pub runs_skipped: i64,
    pub warnings: i64,
}

pub struct Store {
    conn: Connection,
    fault: Option<FaultPoint>,
}

impl Store {
    /// Open (creating if needed) a writable store and apply the schema.
    pub fn open(dsn: &str) -> Result<Store, StoreError> {
        let conn = match Dsn::parse(dsn)? {
            Dsn::Memory => Connection::open_in_memory()?,
            Dsn::File(path) => {
                if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                    std::fs::create_dir_all(parent).map_err(|e| StoreError::StorageUnavailable(e.to_string()))?;
                }
                let conn = Connection::open(&path)?;
                conn.pragma_update(None, "journal_mode", "WAL")?;
                conn
            }
        };
        conn.busy_timeout(Duration::from_secs(10))?;
        conn.pragma_update(None, "foreign_keys", "ON")?;
        conn.execute_batch(SCHEMA_SQL)?;
        Ok(Store { conn, fault: None })
    }

    /// Open an existing file store for reading only.
    pub fn open_read_only(dsn: &str) -> Result<Store, StoreError> {
        let path = match Dsn::parse(dsn)? {
            Dsn::File(path) => path,
            Dsn::Memory => {
                return Err(StoreError::StorageUnavailable("an in-memory store cannot be shared with readers".into()))
            }
        };
        let conn =
            Connection::open_with_flags(&path, OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX)?;
        conn.busy_timeout(Duration::from_secs(10))?;
        conn.pragma_update(None, "query_only", "ON")?;
        // Fails with NotADatabase / missing tables if this is not our store.
        conn.query_row("SELECT COUNT(*) FROM repo", [], |r| r.get::<_, i64>(0))?;
        Ok(Store { conn, fault: None })
    }

    #[doc(hidden)]
    pub fn inject_fault(&mut self, fault: Option<FaultPoint>) {
        self.fault = fault;
    }

    /// Raw connection, for ad-hoc SQL (reports, tests).
    pub fn connection(&self) -> &Connection {
        &self.conn
    }

    pub fn upsert_repo(&self, name: &str, git_url: &str) -> Result<RepoId, StoreError> {
        if let Some(id) =
            self.conn.query_row("SELECT id FROM repo WHERE git_url = ?1", [git_url], |r| r.get(0)).optional()?
        {
            return Ok(id);
        }
        self.conn.execute("INSERT INTO repo (name, git_url) VALUES (?1, ?2)", params![name, git_url])?;
        Ok(self.conn.last_insert_rowid())
    }

    pub fn repos(&self) -> Result<Vec<RepoRow>, StoreError> {
        let mut stmt = self.conn.prepare("SELECT id, name, git_url FROM repo ORDER BY id")?;
        let rows = stmt
            .query_map([], |r| Ok(RepoRow { id: r.get(0)?, name: r.get(1)?, git_url: r.get(2)? }))?
            .collect::<Result<_, _>>()?;
        Ok(rows)
    }

    pub fn repo(&self, id: RepoId) -> Result<RepoRow, StoreError> {
        self.conn
            .query_row("SELECT id, name, git_url FROM repo WHERE id = ?1", [id], |r| {
                Ok(RepoRow { id: r.get(0)?, name: r.get(1)?, git_url: r.get(2)? })
            })
            .optional()?
            .ok_or(StoreError::UnknownRepo(id))
    }

    pub fn repo_by_name(&self, name: &str) -> Result<Option<RepoRow>, StoreError> {
        Ok(self
            .conn
            .query_row("SELECT id, name, git_url FROM repo WHERE name = ?1 ORDER BY id LIMIT 1", [name], |r| {
                Ok(RepoRow { id: r.get(0)?, name: r.get(1)?, git_url: r.get(2)? })
            })
            .optional()?)
    }

    /// Insert a snapshot row and its branch row together.
    pub fn insert_snapshot(
        &mut self,
        repo_id: RepoId,
        commit: &CommitMeta,
        loc: u64,
    ) -> Result<SnapshotId, StoreError> {
        let tx = self.conn.transaction()?;
        tx.execute(
            "INSERT INTO snapshot (repo_id, hash, author_date, author_name, message, loc)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
            params![
                repo_id,
                commit.hash,
                commit.author_date.to_rfc3339(),
                commit.author_name,
                commit.message,
                i64::try_from(loc).unwrap_or(i64::MAX),
            ],
        )?;
        let id = tx.last_insert_rowid();
        tx.execute("INSERT INTO branch (snapshot_id, name) VALUES (?1, ?2)", params![id, commit.branch])?;
        tx.commit()?;
        Ok(id)
    }

    pub fn insert_branch(&self, snapshot_id: SnapshotId, name: &str) -> Result<bool, StoreError> {
        let n = self
            .conn
            .execute("INSERT OR IGNORE INTO branch (snapshot_id, name) VALUES (?1, ?2)", params![snapshot_id, name])?;
        Ok(n > 0)
    }

    /// hash → snapshot id for one repository.
    pub fn snapshot_ids(&self, repo_id: RepoId) -> Result<HashMap<String, SnapshotId>, StoreError> {
        let mut stmt = self.conn.prepare("SELECT hash, id FROM snapshot WHERE repo_id = ?1")?;
        let rows = stmt.query_map([repo_id], |r| Ok((r.get(0)?, r.get(1)?)))?.collect::<Result<_, _>>()?;
        Ok(rows)
    }

    /// Tool identity is (name, configuration, version).
    pub fn upsert_tool(&self, spec: &ToolSpec) -> Result<ToolId, StoreError> {
        let find = |conn: &Connection| {
            conn.query_row(
                "SELECT id FROM tool WHERE name = ?1 AND configuration = ?2 AND version = ?3",
                params![spec.name, spec.configuration(), spec.version],
                |r| r.get(0),
            )
            .optional()
        };
        if let Some(id) = find(&self.conn)? {
            return Ok(id);
        }
        self.conn.execute(
            "INSERT INTO tool (name, configuration, version) VALUES (?1, ?2, ?3)",
            params![spec.name, spec.configuration(), spec.version],
        )?;
        Ok(self.conn.last_insert_rowid())
    }

    pub fn tool(&self, id: ToolId) -> Result<ToolRow, StoreError> {
        self.conn
            .query_row("SELECT id, name, configuration, version FROM tool WHERE id = ?1", [id], |r| {
                Ok(ToolRow { id: r.get(0)?, name: r.get(1)?, configuration: r.get(2)?, version: r.get(3)? })
            })
            .optional()?
            .ok_or(StoreError::UnknownTool(id))
    }

    /// Record one attempt, plus its warnings when it succeeded, atomically.
    ///
    /// The run row for `(tool, snapshot)` is created on the first attempt and
    /// updated afterwards. Writing onto a row that already succeeded is a
    /// constraint violation.
    pub fn insert_run(&mut self, run: &RunWrite, warnings: &[ParsedWarning]) -> Result<RunId, StoreError> {
        if !run.state.succeeded && !warnings.is_empty() {
            return Err(StoreError::InvalidArgument("warnings can only be stored for a successful run".into()));
        }
        if run.state.succeeded && run.state.skipped {
            return Err(StoreError::InvalidArgument("a run cannot be both successful and skipped".into()));
        }
        let fault = self.fault;
        let tx = self.conn.transaction()?;
        let id: Option<RunId> = tx
            .query_row(
                "INSERT INTO run (tool_id, snapshot_id, success, failures, skipped, started_at, duration_ms)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)
                 ON CONFLICT (tool_id, snapshot_id) DO UPDATE SET
                     success = excluded.success,
                     failures = excluded.failures,
                     skipped = excluded.skipped,
                     started_at = excluded.started_at,
                     duration_ms = excluded.duration_ms
                 WHERE run.success = 0
                 RETURNING id",
                params![
                    run.tool_id,
                    run.snapshot_id,
                    run.state.succeeded as i64,
                    i64::from(run.state.failures),
                    run.state.skipped as i64,
                    run.started_at,
                    run.duration_ms.max(0),
                ],
                |r| r.get(0),
            )
            .optional()?;
        let Some(run_id) = id else {
            return Err(StoreError::ConstraintViolation(format!(
                "run for tool {} on snapshot {} already succeeded",
                run.tool_id, run.snapshot_id
            )));
        };
        {
            let mut stmt = tx.prepare_cached(
                "INSERT INTO warning (run_id, message, path, line, severity, type_tag, duplicate, fingerprint)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)",
            )?;
            for (i, w) in warnings.iter().enumerate() {
                match fault {
                    Some(FaultPoint::ErrorAfterWarnings(n)) if i == n => return Err(StoreError::InjectedFault),
                    Some(FaultPoint::AbortAfterWarnings(n)) if i == n => std::process::abort(),
                    _ => {}
                }
                stmt.execute(params![
                    run_id,
                    w.message,
                    w.path,
                    w.line.map(i64::from),
                    w.severity,
                    w.type_tag,
                    w.duplicate as i64,
                    w.fingerprint as i64,
                ])?;
            }
        }
        tx.commit()?;
        Ok(run_id)
    }

    /// Retry state of every run row in the repository.
    pub fn attempts(&self, repo_id: RepoId) -> Result<Vec<StoredAttempt>, StoreError> {
        let mut stmt = self.conn.prepare(
            "SELECT s.hash, r.tool_id, r.success, r.failures, r.skipped
             FROM run r JOIN snapshot s ON s.id = r.snapshot_id
             WHERE s.repo_id = ?1",
        )?;
        let rows = stmt
            .query_map([repo_id], |r| {
                Ok(StoredAttempt {
                    snapshot_hash: r.get(0)?,
                    tool_id: r.get(1)?,
                    state: AttemptState {
                        succeeded: r.get::<_, i64>(2)? == 1,
                        failures: r.get::<_, i64>(3)?.try_into().unwrap_or(u32::MAX),
                        skipped: r.get::<_, i64>(4)? == 1,
                    },
                })
            })?
            .collect::<Result<_, _>>()?;
        Ok(rows)
    }

    /// Clear skip state so the runs are planned again. Returns the number of
    /// run rows changed.
    pub fn reset_skips(&self, repo_id: RepoId) -> Result<usize, StoreError> {
        Ok(self.conn.execute(
            "UPDATE run SET skipped = 0, failures = 0
             WHERE skipped = 1 AND snapshot_id IN (SELECT id FROM snapshot WHERE repo_id = ?1)",
            [repo_id],
        )?)
    }

    pub fn status(&self, repo_id: RepoId) -> Result<RepoStatus, StoreError> {
        self.repo(repo_id)?;
        let snapshots =
            self.conn.query_row("SELECT COUNT(*) FROM snapshot WHERE repo_id = ?1", [repo_id], |r| r.get(0))?;
        let (succeeded, failed, skipped) = self.conn.query_row(
            "SELECT COALESCE(SUM(r.success), 0),
                    COALESCE(SUM(CASE WHEN r.success = 0 AND r.skipped = 0 THEN 1 ELSE 0 END), 0),
                    COALESCE(SUM(r.skipped), 0)
             FROM run r JOIN snapshot s ON s.id = r.snapshot_id WHERE s.repo_id = ?1",
            [repo_id],
            |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?)),
        )?;
        let warnings = self.conn.query_row(
            "SELECT COUNT(*) FROM warning w JOIN run r ON r.id = w.run_id
             JOIN snapshot s ON s.id = r.snapshot_id WHERE s.repo_id = ?1",
            [repo_id],
            |r| r.get(0),
        )?;
        Ok(RepoStatus {
            snapshots,
            runs_succeeded: succeeded,
            runs_failed_pending: failed,
            runs_skipped: skipped,
            warnings,
        })
    }

    /// Row count of each table, in [`TABLES`] order.
    pub fn table_counts(&self) -> Result<[i64; 6], StoreError> {
        let mut out = [0; 6];
        for (slot, table) in out.iter_mut().zip(TABLES) {
            *slot = self.conn.query_row(&format!("SELECT COUNT(*) FROM {table}"), [], |r| r.get(0))?;
        }
        Ok(out)
    }

    /// Rows reported by `PRAGMA foreign_key_check`; empty when every
    /// reference resolves.
    pub fn foreign_key_violations(&self) -> Result<usize, StoreError> {
        let mut stmt = self.conn.prepare("PRAGMA foreign_key_check")?;
        let n = stmt.query_map([], |_| Ok(()))?.count();
        Ok(n)
    }
}
