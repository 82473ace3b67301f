//! Dashboard aggregations. All read-only and always scoped to a single tool.

use std::collections::HashMap;

use rusqlite::{params, OptionalExtension};
use serde::{Deserialize, Serialize};

use super::{RepoId, RunId, Store, StoreError, ToolId, ToolRow};

pub const DEFAULT_PAGE_SIZE: u32 = 50;
pub const MAX_PAGE_SIZE: u32 = 500;

/// Characters of the message used as the group key for untagged warnings.
const MESSAGE_PREFIX_CHARS: usize = 80;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub author_date: String,
    pub snapshot_hash: String,
    pub warning_count: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TypeSource {
    TypeTag,
    MessagePrefix,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeCount {
    pub label: String,
    pub source: TypeSource,
    pub count: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HotspotEntry {
    pub module_path: String,
    pub count: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarningRow {
    pub id: i64,
    pub message: String,
    pub path: String,
    pub line: Option<i64>,
    pub severity: Option<String>,
    pub type_tag: Option<String>,
    pub duplicate: bool,
    /// Hex, since JSON numbers cannot carry 64 bits exactly.
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarningPage {
    pub page: u32,
    pub page_size: u32,
    pub total: i64,
    pub snapshot_hash: Option<String>,
    pub rows: Vec<WarningRow>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WarningFilter {
    pub path_prefix: Option<String>,
    pub severity: Option<String>,
    /// 1-based.
    pub page: u32,
    pub page_size: u32,
}

/// Directory bucket of `path`: its first `depth` directory components, or
/// `"."` for files at the repository root.
pub fn module_of(path: &str, depth: usize) -> String {
    let mut parts: Vec<&str> = path.split('/').filter(|p| !p.is_empty()).collect();
    parts.pop();
    parts.truncate(depth);
    if parts.is_empty() {
        ".".to_string()
    } else {
        parts.join("/")
    }
}

impl Store {
    fn check_tool(&self, tool_id: ToolId) -> Result<(), StoreError> {
        self.tool(tool_id).map(|_| ())
    }

    /// Tools with at least one run on the repository.
    pub fn tools_for_repo(&self, repo_id: RepoId) -> Result<Vec<ToolRow>, StoreError> {
        self.repo(repo_id)?;
        let mut stmt = self.conn.prepare(
            "SELECT DISTINCT t.id, t.name, t.configuration, t.version
             FROM tool t JOIN run r ON r.tool_id = t.id JOIN snapshot s ON s.id = r.snapshot_id
             WHERE s.repo_id = ?1 ORDER BY t.id",
        )?;
        let rows = stmt
            .query_map([repo_id], |r| {
                Ok(ToolRow { id: r.get(0)?, name: r.get(1)?, configuration: r.get(2)?, version: r.get(3)? })
            })?
            .collect::<Result<_, _>>()?;
        Ok(rows)
    }

    /// Warning count per snapshot with a successful run of `tool_id`,
    /// ordered by (author date, hash).
    pub fn trend_series(&self, repo_id: RepoId, tool_id: ToolId) -> Result<Vec<TrendPoint>, StoreError> {
        self.repo(repo_id)?;
        self.check_tool(tool_id)?;
        let mut stmt = self.conn.prepare(
            "SELECT s.author_date, s.hash, COUNT(w.id)
             FROM run r
             JOIN snapshot s ON s.id = r.snapshot_id
             LEFT JOIN warning w ON w.run_id = r.id
             WHERE s.repo_id = ?1 AND r.tool_id = ?2 AND r.success = 1
             GROUP BY r.id
             ORDER BY julianday(s.author_date), s.hash",
        )?;
        let rows = stmt
            .query_map(params![repo_id, tool_id], |r| {
                Ok(TrendPoint { author_date: r.get(0)?, snapshot_hash: r.get(1)?, warning_count: r.get(2)? })
            })?
            .collect::<Result<_, _>>()?;
        Ok(rows)
    }

    /// The successful run an aggregation looks at: the one at `at_snapshot`,
    /// or the latest one when not given. `Ok(None)` if the tool never
    /// succeeded on this repository.
    pub fn scope_run(
        &self,
        repo_id: RepoId,
        tool_id: ToolId,
        at_snapshot: Option<&str>,
    ) -> Result<Option<(RunId, String)>, StoreError> {
        self.repo(repo_id)?;
        self.check_tool(tool_id)?;
        match at_snapshot {
            Some(hash) => self
                .conn
                .query_row(
                    "SELECT r.id, s.hash FROM run r JOIN snapshot s ON s.id = r.snapshot_id
                     WHERE s.repo_id = ?1 AND r.tool_id = ?2 AND r.success = 1 AND s.hash = ?3",
                    params![repo_id, tool_id, hash],
                    |r| Ok((r.get(0)?, r.get(1)?)),
                )
                .optional()?
                .map(Some)
                .ok_or_else(|| StoreError::UnknownSnapshot(hash.to_string())),
            None => Ok(self
                .conn
                .query_row(
                    "SELECT r.id, s.hash FROM run r JOIN snapshot s ON s.id = r.snapshot_id
                     WHERE s.repo_id = ?1 AND r.tool_id = ?2 AND r.success = 1
                     ORDER BY julianday(s.author_date) DESC, s.hash DESC LIMIT 1",
                    params![repo_id, tool_id],
                    |r| Ok((r.get(0)?, r.get(1)?)),
                )
                .optional()?),
        }
    }

    /// Warning groups at one snapshot: by type tag when the tool gave one,
    /// otherwise by the first 80 characters of the message. Descending count.
    pub fn type_counts(
        &self,
        repo_id: RepoId,
        tool_id: ToolId,
        at_snapshot: Option<&str>,
    ) -> Result<Vec<TypeCount>, StoreError> {
        let Some((run_id, _)) = self.scope_run(repo_id, tool_id, at_snapshot)? else {
            return Ok(Vec::new());
        };
        let mut stmt = self.conn.prepare(
            "SELECT type_tag IS NULL AS untagged,
                    COALESCE(type_tag, substr(message, 1, ?2)) AS label,
                    COUNT(*) AS n
             FROM warning WHERE run_id = ?1
             GROUP BY untagged, label
             ORDER BY n DESC, label ASC, untagged ASC",
        )?;
        let rows = stmt
            .query_map(params![run_id, MESSAGE_PREFIX_CHARS as i64], |r| {
                let untagged: bool = r.get(0)?;
                Ok(TypeCount {
                    label: r.get(1)?,
                    source: if untagged { TypeSource::MessagePrefix } else { TypeSource::TypeTag },
                    count: r.get(2)?,
                })
            })?
            .collect::<Result<_, _>>()?;
        Ok(rows)
    }

    /// Warning counts per directory prefix of `depth` components.
    pub fn hotspots(
        &self,
        repo_id: RepoId,
        tool_id: ToolId,
        at_snapshot: Option<&str>,
        depth: usize,
    ) -> Result<Vec<HotspotEntry>, StoreError> {
        if depth == 0 {
            return Err(StoreError::InvalidArgument("depth must be at least 1".into()));
        }
        let Some((run_id, _)) = self.scope_run(repo_id, tool_id, at_snapshot)? else {
            return Ok(Vec::new());
        };
        let mut stmt = self.conn.prepare("SELECT path, COUNT(*) FROM warning WHERE run_id = ?1 GROUP BY path")?;
        let mut buckets: HashMap<String, i64> = HashMap::new();
        let rows = stmt.query_map([run_id], |r| Ok((r.get::<_, String>(0)?, r.get::<_, i64>(1)?)))?;
        for row in rows {
            let (path, n) = row?;
            *buckets.entry(module_of(&path, depth)).or_default() += n;
        }
        let mut out: Vec<HotspotEntry> =
            buckets.into_iter().map(|(module_path, count)| HotspotEntry { module_path, count }).collect();
        out.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.module_path.cmp(&b.module_path)));
        Ok(out)
    }

    /// Verbatim warning rows at one snapshot, filtered and paginated by id.
    pub fn warnings_page(
        &self,
        repo_id: RepoId,
        tool_id: ToolId,
        at_snapshot: Option<&str>,
        filter: &WarningFilter,
    ) -> Result<WarningPage, StoreError> {
        let page = filter.page.max(1);
        let page_size = match filter.page_size {
            0 => DEFAULT_PAGE_SIZE,
            n => n.min(MAX_PAGE_SIZE),
        };
        let scope = self.scope_run(repo_id, tool_id, at_snapshot)?;
        let Some((run_id, hash)) = scope else {
            return Ok(WarningPage { page, page_size, total: 0, snapshot_hash: None, rows: Vec::new() });
        };

        let prefix = filter.path_prefix.as_deref().map(|p| p.trim_end_matches('/')).filter(|p| !p.is_empty());
        let mut clauses = vec!["run_id = ?1".to_string()];
        let mut args: Vec<rusqlite::types::Value> = vec![run_id.into()];
        match prefix {
            Some(".") => clauses.push("instr(path, '/') = 0".into()),
            Some(p) => {
                args.push(p.to_string().into());
                let n = args.len();
                clauses.push(format!("(path = ?{n} OR substr(path, 1, length(?{n}) + 1) = ?{n} || '/')"));
            }
            None => {}
        }
        if let Some(sev) = &filter.severity {
            args.push(sev.clone().into());
            clauses.push(format!("severity = ?{}", args.len()));
        }
        let filter_sql = clauses.join(" AND ");

        let total: i64 = self.conn.query_row(
            &format!("SELECT COUNT(*) FROM warning WHERE {filter_sql}"),
            rusqlite::params_from_iter(args.iter()),
            |r| r.get(0),
        )?;
        let mut page_args = args.clone();
        page_args.push(i64::from(page_size).into());
        page_args.push((i64::from(page - 1) * i64::from(page_size)).into());
        let n = page_args.len();
        let mut stmt = self.conn.prepare(&format!(
            "SELECT id, message, path, line, severity, type_tag, duplicate, fingerprint
             FROM warning WHERE {filter_sql} ORDER BY id LIMIT ?{} OFFSET ?{n}",
            n - 1
        ))?;
        let rows = stmt
            .query_map(rusqlite::params_from_iter(page_args.iter()), |r| {
                Ok(WarningRow {
                    id: r.get(0)?,
                    message: r.get(1)?,
                    path: r.get(2)?,
                    line: r.get(3)?,
                    severity: r.get(4)?,
                    type_tag: r.get(5)?,
                    duplicate: r.get::<_, i64>(6)? == 1,
                    fingerprint: format!("{:016x}", r.get::<_, i64>(7)? as u64),
                })
            })?
            .collect::<Result<_, _>>()?;
        Ok(WarningPage { page, page_size, total, snapshot_hash: Some(hash), rows })
    }
}
