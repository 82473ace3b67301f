//! Pending-run planning and the retry-then-skip policy.

use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::ToolSpec;
use crate::vcs::CommitMeta;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RunKey {
    pub repo_id: String,
    pub snapshot_hash: String,
    pub tool_name: String,
}

impl RunKey {
    pub fn new(repo_id: impl Into<String>, snapshot_hash: impl Into<String>, tool_name: impl Into<String>) -> Self {
        RunKey { repo_id: repo_id.into(), snapshot_hash: snapshot_hash.into(), tool_name: tool_name.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AttemptState {
    pub failures: u32,
    pub succeeded: bool,
    pub skipped: bool,
}

impl AttemptState {
    pub fn is_settled(&self) -> bool {
        self.succeeded || self.skipped
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_failures: u32,
    #[serde(with = "secs")]
    pub per_run_timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_failures: 3, per_run_timeout: Duration::from_secs(30 * 60) }
    }
}

impl RetryPolicy {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_failures == 0 {
            return Err("max_failures must be at least 1".into());
        }
        if self.per_run_timeout.is_zero() {
            return Err("per_run_timeout must be positive".into());
        }
        Ok(())
    }
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Failure,
    Timeout,
    /// The run can never succeed as configured (e.g. it needs a build and
    /// the snapshot has none). Goes straight to skipped.
    Permanent,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("cannot record an attempt on a run that already succeeded")]
    IllegalTransition,
}

/// Runs still to execute, ordered by snapshot position then tool
/// registration order.
pub fn plan_runs(
    repo_id: &str,
    snapshots: &[CommitMeta],
    tools: &[ToolSpec],
    history: &HashMap<RunKey, AttemptState>,
    policy: &RetryPolicy,
) -> Vec<RunKey> {
    let mut plan = Vec::new();
    for snapshot in snapshots {
        for tool in tools {
            let key = RunKey::new(repo_id, &snapshot.hash, &tool.name);
            let pending = match history.get(&key) {
                None => true,
                Some(s) => !s.succeeded && !s.skipped && s.failures < policy.max_failures,
            };
            if pending {
                plan.push(key);
            }
        }
    }
    plan
}

/// Keys that have exhausted their retries under `policy` but are not yet
/// marked skipped, e.g. after `max_failures` was lowered.
pub fn exhausted_runs(history: &HashMap<RunKey, AttemptState>, policy: &RetryPolicy) -> Vec<RunKey> {
    let mut keys: Vec<RunKey> = history
        .iter()
        .filter(|(_, s)| !s.is_settled() && s.failures >= policy.max_failures)
        .map(|(k, _)| k.clone())
        .collect();
    keys.sort();
    keys
}

/// State of a key once `exhausted_runs` flagged it.
pub fn mark_skipped(state: AttemptState, policy: &RetryPolicy) -> AttemptState {
    debug_assert!(!state.succeeded);
    AttemptState { failures: policy.max_failures, succeeded: false, skipped: true }
}

pub fn record_attempt(state: AttemptState, outcome: Outcome, policy: &RetryPolicy) -> Result<AttemptState, PlanError> {
    if state.succeeded {
        return Err(PlanError::IllegalTransition);
    }
    let next = match outcome {
        Outcome::Success => AttemptState { failures: state.failures, succeeded: true, skipped: false },
        Outcome::Failure | Outcome::Timeout => {
            let failures = (state.failures + 1).min(policy.max_failures);
            AttemptState { failures, succeeded: false, skipped: failures >= policy.max_failures }
        }
        Outcome::Permanent => AttemptState { failures: policy.max_failures, succeeded: false, skipped: true },
    };
    Ok(next)
}
