//! Model-checked write sequences and crash injection for the store.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::process::Command;

use chrono::DateTime;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use sastwatch::harness::{ReportFormat, Runner, ToolSpec};
use sastwatch::ingest::ParsedWarning;
use sastwatch::planner::AttemptState;
use sastwatch::store::{FaultPoint, RunWrite, Store, StoreError};
use sastwatch::vcs::CommitMeta;

/// Set in a re-executed test binary to make it crash mid-write.
pub const CRASH_ENV: &str = "SASTWATCH_TEST_CRASH_DB";

pub fn commit(i: usize) -> CommitMeta {
    CommitMeta {
        hash: format!("{i:040x}"),
        author_date: DateTime::parse_from_rfc3339("2022-01-01T00:00:00+00:00").unwrap()
            + chrono::Duration::minutes(i as i64),
        author_name: "T".into(),
        message: format!("c{i}"),
        branch: "main".into(),
    }
}

pub fn tool(i: usize) -> ToolSpec {
    ToolSpec {
        name: format!("tool{i}"),
        category: "test".into(),
        languages: vec!["any".into()],
        invocation_template: format!("run {i}"),
        report_format: ReportFormat::BuiltinJson,
        version: "1".into(),
        runner: Runner::Shell,
        success_exit_codes: vec![0],
        report_path: None,
    }
}

pub fn warnings(n: usize, seed: usize) -> Vec<ParsedWarning> {
    (0..n)
        .map(|k| ParsedWarning {
            message: format!("m{seed}-{k}"),
            path: format!("src/F{}.java", k % 3),
            line: Some(k as u32 + 1),
            severity: Some("HIGH".into()),
            type_tag: (k % 2 == 0).then(|| "T".into()),
            duplicate: false,
            fingerprint: (seed * 1000 + k) as u64,
        })
        .collect()
}

pub fn write(tool_id: i64, snapshot_id: i64, state: AttemptState) -> RunWrite {
    RunWrite { tool_id, snapshot_id, state, started_at: "2022-01-01T00:00:00.000Z".into(), duration_ms: 5 }
}

pub const SUCCESS: AttemptState = AttemptState { failures: 0, succeeded: true, skipped: false };

#[derive(Debug, Clone)]
pub enum Op {
    Repo(usize),
    Snapshot { repo: usize, commit: usize },
    Branch { snapshot: usize, branch: usize },
    Tool(usize),
    Fail { tool: usize, snapshot: usize },
    Skip { tool: usize, snapshot: usize },
    Succeed { tool: usize, snapshot: usize, warnings: usize, fault_at: Option<usize> },
}

pub fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0..3usize).prop_map(Op::Repo),
        (0..4usize, 0..6usize).prop_map(|(repo, commit)| Op::Snapshot { repo, commit }),
        (0..8usize, 0..3usize).prop_map(|(snapshot, branch)| Op::Branch { snapshot, branch }),
        (0..4usize).prop_map(Op::Tool),
        (0..4usize, 0..8usize).prop_map(|(tool, snapshot)| Op::Fail { tool, snapshot }),
        (0..4usize, 0..8usize).prop_map(|(tool, snapshot)| Op::Skip { tool, snapshot }),
        (0..4usize, 0..8usize, 0..6usize, prop::option::weighted(0.2, 0..6usize))
            .prop_map(|(tool, snapshot, warnings, fault_at)| Op::Succeed { tool, snapshot, warnings, fault_at }),
    ]
}

/// What the database should contain, tracked independently.
#[derive(Default)]
pub struct Model {
    repos: HashMap<usize, i64>,
    /// Insertion order; index is the `snapshot` operand of later ops.
    snapshots: Vec<(i64, usize, usize)>,
    branches: HashSet<(i64, String)>,
    tools: HashMap<usize, i64>,
    /// (tool id, snapshot id) → succeeded
    runs: HashMap<(i64, i64), bool>,
    warnings: usize,
}

pub const MISSING: i64 = 9_999;

pub fn apply(store: &mut Store, model: &mut Model, op: &Op, seed: usize) -> Result<(), TestCaseError> {
    match *op {
        Op::Repo(i) => {
            let id = store.upsert_repo(&format!("r{i}"), &format!("file:///r{i}")).unwrap();
            if let Some(&prev) = model.repos.get(&i) {
                prop_assert_eq!(prev, id);
            }
            model.repos.insert(i, id);
        }
        Op::Snapshot { repo, commit: c } => {
            let repo_id = model.repos.get(&repo).copied().unwrap_or(MISSING);
            let result = store.insert_snapshot(repo_id, &commit(c), 10);
            let dup = model.snapshots.iter().any(|&(_, r, cc)| r == repo && cc == c);
            if repo_id == MISSING || dup {
                prop_assert!(result.is_err(), "{:?} should fail", op);
            } else {
                let id = result.unwrap();
                model.snapshots.push((id, repo, c));
                model.branches.insert((id, "main".into()));
            }
        }
        Op::Branch { snapshot, branch } => {
            let id = model.snapshots.get(snapshot).map_or(MISSING, |s| s.0);
            let name = format!("b{branch}");
            let result = store.insert_branch(id, &name);
            if id == MISSING {
                prop_assert!(result.is_err());
            } else {
                prop_assert_eq!(result.unwrap(), model.branches.insert((id, name)));
            }
        }
        Op::Tool(i) => {
            let id = store.upsert_tool(&tool(i)).unwrap();
            if let Some(&prev) = model.tools.get(&i) {
                prop_assert_eq!(prev, id);
            }
            model.tools.insert(i, id);
        }
        Op::Fail { tool, snapshot } | Op::Skip { tool, snapshot } => {
            let skipped = matches!(op, Op::Skip { .. });
            let t = model.tools.get(&tool).copied().unwrap_or(MISSING);
            let s = model.snapshots.get(snapshot).map_or(MISSING, |s| s.0);
            let state = AttemptState { failures: if skipped { 3 } else { 1 }, succeeded: false, skipped };
            let result = store.insert_run(&write(t, s, state), &[]);
            if t == MISSING || s == MISSING {
                prop_assert!(result.is_err());
            } else if model.runs.get(&(t, s)) == Some(&true) {
                prop_assert!(matches!(result, Err(StoreError::ConstraintViolation(_))), "{:?}", result);
            } else {
                result.unwrap();
                model.runs.insert((t, s), false);
            }
        }
        Op::Succeed { tool, snapshot, warnings: n, fault_at } => {
            let t = model.tools.get(&tool).copied().unwrap_or(MISSING);
            let s = model.snapshots.get(snapshot).map_or(MISSING, |s| s.0);
            let fault = fault_at.filter(|&k| k < n);
            store.inject_fault(fault.map(FaultPoint::ErrorAfterWarnings));
            let result = store.insert_run(&write(t, s, SUCCESS), &warnings(n, seed));
            store.inject_fault(None);
            if t == MISSING || s == MISSING {
                prop_assert!(result.is_err());
            } else if model.runs.get(&(t, s)) == Some(&true) {
                prop_assert!(matches!(result, Err(StoreError::ConstraintViolation(_))), "{:?}", result);
            } else if fault.is_some() {
                prop_assert!(matches!(result, Err(StoreError::InjectedFault)), "{:?}", result);
            } else {
                result.unwrap();
                model.runs.insert((t, s), true);
                model.warnings += n;
            }
        }
    }
    Ok(())
}

pub fn check_invariants(store: &Store, model: &Model) -> Result<(), TestCaseError> {
    prop_assert_eq!(store.foreign_key_violations().unwrap(), 0);
    let counts = store.table_counts().unwrap();
    prop_assert_eq!(
        counts,
        [
            model.repos.len() as i64,
            model.snapshots.len() as i64,
            model.branches.len() as i64,
            model.tools.len() as i64,
            model.runs.len() as i64,
            model.warnings as i64,
        ]
    );
    let conn = store.connection();
    let q = |sql: &str| -> i64 { conn.query_row(sql, [], |r| r.get(0)).unwrap() };
    prop_assert_eq!(
        q("SELECT COUNT(*) FROM (SELECT tool_id, snapshot_id FROM run WHERE success = 1
           GROUP BY tool_id, snapshot_id HAVING COUNT(*) > 1)"),
        0
    );
    prop_assert_eq!(q("SELECT COUNT(*) FROM warning w JOIN run r ON r.id = w.run_id WHERE r.success = 0"), 0);
    prop_assert_eq!(
        q("SELECT COUNT(*) FROM run WHERE success = 1"),
        model.runs.values().filter(|&&s| s).count() as i64
    );
    Ok(())
}

/// `cases` random operation sequences, each checked against [`Model`].
pub fn run_interleavings(cases: u32) -> Result<(), String> {
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    runner
        .run(&prop::collection::vec(op(), 1..60), |ops| {
            let mut store = Store::open(":memory:").unwrap();
            let mut model = Model::default();
            for (seed, op) in ops.iter().enumerate() {
                apply(&mut store, &mut model, op, seed)?;
            }
            check_invariants(&store, &model)
        })
        .map_err(|e| e.to_string())
}

pub fn seed_store(path: &Path) -> (i64, i64, i64) {
    let dsn = path.to_string_lossy().into_owned();
    let mut store = Store::open(&dsn).unwrap();
    let repo = store.upsert_repo("r", "file:///r").unwrap();
    let snapshot = store.insert_snapshot(repo, &commit(0), 1).unwrap();
    let committed = store.upsert_tool(&tool(0)).unwrap();
    let crashing = store.upsert_tool(&tool(1)).unwrap();
    store.insert_run(&write(committed, snapshot, SUCCESS), &warnings(7, 0)).unwrap();
    (snapshot, committed, crashing)
}

/// Child side: when [`CRASH_ENV`] is set, start a 50-warning run and abort
/// the process after 25 rows. Returns normally otherwise.
pub fn crash_child_if_requested() {
    let Ok(path) = std::env::var(CRASH_ENV) else { return };
    let mut store = Store::open(&path).unwrap();
    let snapshot: i64 = std::env::var("SASTWATCH_TEST_SNAPSHOT").unwrap().parse().unwrap();
    let tool: i64 = std::env::var("SASTWATCH_TEST_TOOL").unwrap().parse().unwrap();
    store.inject_fault(Some(FaultPoint::AbortAfterWarnings(25)));
    let _ = store.insert_run(&write(tool, snapshot, SUCCESS), &warnings(50, 1));
    unreachable!("the fault aborts the process");
}

/// Parent side: seed a database, re-run the current executable with `args`
/// so that it calls [`crash_child_if_requested`], then check that the
/// database holds no trace of the interrupted run and accepts a retry.
pub fn crash_mid_run(args: &[&str]) {
    use std::os::unix::process::ExitStatusExt;

    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("crash.db");
    let (snapshot, committed, crashing) = seed_store(&db);

    let status = Command::new(std::env::current_exe().unwrap())
        .args(args)
        .env(CRASH_ENV, &db)
        .env("SASTWATCH_TEST_SNAPSHOT", snapshot.to_string())
        .env("SASTWATCH_TEST_TOOL", crashing.to_string())
        .stdout(std::process::Stdio::null())
        .stderr(std::process::Stdio::null())
        .status()
        .unwrap();
    assert_eq!(status.signal(), Some(libc::SIGABRT), "child should abort, got {status:?}");

    let mut store = Store::open(&db.to_string_lossy()).unwrap();
    assert_eq!(store.foreign_key_violations().unwrap(), 0);
    // repo, snapshot, branch, two tools, the one committed run and its warnings.
    assert_eq!(store.table_counts().unwrap(), [1, 1, 1, 2, 1, 7]);
    let attempts = store.attempts(1).unwrap();
    assert_eq!(attempts.len(), 1);
    assert_eq!(attempts[0].tool_id, committed);

    // The interrupted run can simply be redone.
    store.insert_run(&write(crashing, snapshot, SUCCESS), &warnings(50, 1)).unwrap();
    assert_eq!(store.table_counts().unwrap(), [1, 1, 1, 2, 2, 57]);
}
