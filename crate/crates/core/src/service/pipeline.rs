//! One analysis cycle over every configured repository, and the polling loop.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{PlatformConfig, RepoConfig};
use crate::harness::{detect_build_system, invoke_tool, BuildSystem, Runner, ToolSpec};
use crate::ingest::{mark_duplicates, ParsedWarning, ParserRegistry};
use crate::planner::{exhausted_runs, mark_skipped, plan_runs, record_attempt, AttemptState, Outcome, RunKey};
use crate::store::{RunWrite, Store, StoreError, ToolId};
use crate::vcs::{self, CheckoutPath, VcsError};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleSummary {
    pub repo: String,
    pub new_snapshots: u64,
    pub runs_attempted: u64,
    pub runs_succeeded: u64,
    pub runs_failed: u64,
    /// Runs that became skipped during this cycle.
    pub runs_skipped: u64,
    pub warnings_inserted: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CycleSummary {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("summary serializes")
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Vcs(#[from] VcsError),
}

/// Open the configured store and run one cycle.
pub fn analyze_once(config: &PlatformConfig) -> Result<Vec<CycleSummary>, StoreError> {
    let mut store = Store::open(&config.storage_dsn)?;
    Ok(analyze_with(config, &mut store, &AtomicBool::new(false)))
}

/// One cycle against an open store. Per-repository failures end up in the
/// summary's `error` field and never stop the other repositories. Setting
/// `shutdown` stops the cycle between runs.
pub fn analyze_with(config: &PlatformConfig, store: &mut Store, shutdown: &AtomicBool) -> Vec<CycleSummary> {
    let parsers = ParserRegistry::default();
    let mut summaries = Vec::new();
    for repo_cfg in &config.repositories {
        if shutdown.load(Ordering::SeqCst) {
            break;
        }
        let mut summary = CycleSummary {
            repo: vcs::repo_name_from_url(&repo_cfg.git_url).unwrap_or_else(|_| repo_cfg.git_url.clone()),
            ..Default::default()
        };
        if let Err(e) = analyze_repo(config, repo_cfg, store, &parsers, shutdown, &mut summary) {
            tracing::error!(repo = %summary.repo, error = %e, "repository cycle failed");
            summary.error = Some(e.to_string());
        }
        tracing::info!(
            repo = %summary.repo,
            new_snapshots = summary.new_snapshots,
            runs_attempted = summary.runs_attempted,
            runs_succeeded = summary.runs_succeeded,
            runs_failed = summary.runs_failed,
            runs_skipped = summary.runs_skipped,
            warnings_inserted = summary.warnings_inserted,
            "cycle finished"
        );
        summaries.push(summary);
    }
    summaries
}

fn analyze_repo(
    config: &PlatformConfig,
    repo_cfg: &RepoConfig,
    store: &mut Store,
    parsers: &ParserRegistry,
    shutdown: &AtomicBool,
    summary: &mut CycleSummary,
) -> Result<(), PipelineError> {
    let repo = vcs::clone_or_fetch(&repo_cfg.git_url, &config.workdir)?;
    let branch = match &repo_cfg.branch {
        Some(b) => b.clone(),
        None => vcs::default_branch(&repo)?,
    };
    let commits = vcs::list_commits(&repo, &branch)?;
    let repo_id = store.upsert_repo(&repo.name, &repo_cfg.git_url)?;

    let mut snapshot_ids = store.snapshot_ids(repo_id)?;
    let mut current: Option<CheckoutPath> = None;
    for commit in &commits {
        if let Some(&id) = snapshot_ids.get(&commit.hash) {
            store.insert_branch(id, &branch)?;
            continue;
        }
        let checkout = vcs::checkout_snapshot(&repo, &commit.hash)?;
        let loc = vcs::measure_loc(&checkout);
        let id = store.insert_snapshot(repo_id, commit, loc)?;
        tracing::debug!(repo = %repo.name, hash = %commit.hash, loc, "snapshot stored");
        snapshot_ids.insert(commit.hash.clone(), id);
        summary.new_snapshots += 1;
        current = Some(checkout);
    }

    let tools: Vec<ToolSpec> =
        config.enabled_tools().into_iter().filter(|t| t.supports_any(&repo_cfg.languages)).collect();
    let mut tool_ids: HashMap<String, ToolId> = HashMap::new();
    for t in &tools {
        tool_ids.insert(t.name.clone(), store.upsert_tool(t)?);
    }
    let names_by_id: HashMap<ToolId, &str> = tool_ids.iter().map(|(n, &id)| (id, n.as_str())).collect();

    let repo_key = repo_id.to_string();
    let mut history: HashMap<RunKey, AttemptState> = HashMap::new();
    for a in store.attempts(repo_id)? {
        if let Some(name) = names_by_id.get(&a.tool_id) {
            history.insert(RunKey::new(&repo_key, a.snapshot_hash, *name), a.state);
        }
    }

    let policy = config.retry;
    for key in exhausted_runs(&history, &policy) {
        let state = mark_skipped(history[&key], &policy);
        let run = RunWrite {
            tool_id: tool_ids[&key.tool_name],
            snapshot_id: snapshot_ids[&key.snapshot_hash],
            state,
            started_at: now(),
            duration_ms: 0,
        };
        store.insert_run(&run, &[])?;
        history.insert(key, state);
        summary.runs_skipped += 1;
    }

    let plan = plan_runs(&repo_key, &commits, &tools, &history, &policy);
    let specs: HashMap<&str, &ToolSpec> = tools.iter().map(|t| (t.name.as_str(), t)).collect();
    let mut build: Option<(String, BuildSystem)> = None;
    let mut dirty = false;

    for key in plan {
        if shutdown.load(Ordering::SeqCst) {
            tracing::info!(repo = %repo.name, "shutdown requested, stopping before next run");
            break;
        }
        let spec = specs[key.tool_name.as_str()];
        let needs_checkout = match &current {
            Some(c) => c.commit != key.snapshot_hash || dirty,
            None => true,
        };
        if needs_checkout {
            current = Some(vcs::checkout_snapshot(&repo, &key.snapshot_hash)?);
            dirty = false;
        }
        let checkout = current.as_ref().expect("checked out above");
        let build_system = match &build {
            Some((hash, b)) if *hash == key.snapshot_hash && !needs_checkout => b.clone(),
            _ => {
                let b = detect_build_system(checkout);
                build = Some((key.snapshot_hash.clone(), b.clone()));
                b
            }
        };

        let started_at = now();
        let t0 = Instant::now();
        let scratch = repo.scratch_dir().join(&spec.name);
        let result = invoke_tool(spec, checkout, &build_system, &policy, &scratch);
        dirty |= spec.runner == Runner::Shell;

        let (outcome, warnings): (Outcome, Vec<ParsedWarning>) = match result {
            Ok(raw) => match parsers.parse(&raw, &checkout.root) {
                Ok((ws, _dropped)) => (Outcome::Success, mark_duplicates(ws)),
                Err(e) => {
                    tracing::warn!(repo = %repo.name, tool = %spec.name, hash = %key.snapshot_hash, error = %e, "report rejected");
                    (Outcome::Failure, Vec::new())
                }
            },
            Err(e) => {
                tracing::warn!(repo = %repo.name, tool = %spec.name, hash = %key.snapshot_hash, error = %e, "tool run failed");
                (e.outcome(), Vec::new())
            }
        };

        let previous = history.get(&key).copied().unwrap_or_default();
        let state = record_attempt(previous, outcome, &policy).expect("planned runs never succeeded");
        let run = RunWrite {
            tool_id: tool_ids[&key.tool_name],
            snapshot_id: snapshot_ids[&key.snapshot_hash],
            state,
            started_at,
            duration_ms: t0.elapsed().as_millis().try_into().unwrap_or(i64::MAX),
        };
        store.insert_run(&run, &warnings)?;
        history.insert(key, state);

        summary.runs_attempted += 1;
        if state.succeeded {
            summary.runs_succeeded += 1;
            summary.warnings_inserted += warnings.len() as u64;
        } else {
            summary.runs_failed += 1;
            if state.skipped {
                summary.runs_skipped += 1;
            }
        }
    }
    Ok(())
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Run cycles until `shutdown` is set, sleeping `poll_interval` in between.
/// `on_cycle` sees every cycle's summaries.
pub fn monitor_loop(
    config: &PlatformConfig,
    shutdown: &AtomicBool,
    mut on_cycle: impl FnMut(&[CycleSummary]),
) -> Result<(), StoreError> {
    let mut store = Store::open(&config.storage_dsn)?;
    while !shutdown.load(Ordering::SeqCst) {
        let summaries = analyze_with(config, &mut store, shutdown);
        on_cycle(&summaries);
        let deadline = Instant::now() + config.poll_interval;
        while !shutdown.load(Ordering::SeqCst) && Instant::now() < deadline {
            std::thread::sleep(Duration::from_millis(50).min(deadline - Instant::now()));
        }
    }
    tracing::info!("monitor stopped");
    Ok(())
}
