//! Static-analysis history platform.
//!
//! Walks a Git repository's commit history, runs analyzers on every
//! snapshot, stores each raw finding in a relational database and serves
//! per-tool trend, alert-type and hotspot aggregations over HTTP.
//!
//! Module map:
//! - [`vcs`]: clone/fetch, chronological history, clean checkouts, LOC.
//! - [`planner`]: pending runs and the retry-then-skip policy.
//! - [`harness`]: tool registry, build detection, invocation, builtin scanner.
//! - [`ingest`]: report parsers, fingerprints, duplicate flags.
//! - [`store`]: SQLite schema, writes and aggregation queries.
//! - [`service`]: config, analysis cycles, polling loop, JSON API.

pub mod fixture;
pub mod harness;
pub mod ingest;
pub mod par;
pub mod planner;
pub mod service;
pub mod store;
pub mod vcs;

pub use harness::{RawReport, ReportFormat, ToolSpec};
pub use ingest::{parse_report, ParsedWarning};
pub use planner::{AttemptState, RetryPolicy, RunKey};
pub use store::Store;
pub use vcs::{CheckoutPath, CommitMeta, RepoRef};
