//! Randomly populated databases and independent query oracles.

use std::collections::BTreeMap;

use chrono::{DateTime, FixedOffset, TimeZone};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sastwatch::harness::{ReportFormat, Runner, ToolSpec};
use sastwatch::ingest::ParsedWarning;
use sastwatch::planner::AttemptState;
use sastwatch::store::{Store, TypeSource, WarningFilter};
use sastwatch::vcs::CommitMeta;

const DIRS: &[&str] = &["", "src", "src/main", "src/main/java/app", "src/main/java/app/db", "lib", "lib/x/y/z"];
const TAGS: &[&str] = &["CWE-79", "CWE-89", "NULL_DEREFERENCE", "UnusedVariable"];
const SEVERITIES: &[&str] = &["HIGH", "LOW", "3", "error"];

pub struct Db {
    pub store: Store,
    pub repos: Vec<i64>,
    pub tools: Vec<i64>,
}

fn random_message(rng: &mut ChaCha8Rng) -> String {
    let stem = ["Possible null dereference", "Tainted data reaches sink", "x"][rng.gen_range(0..3)];
    if rng.gen_bool(0.3) {
        // Long messages that agree on their first 80 characters.
        format!("{} {}", "a".repeat(79), rng.gen_range(0..3))
    } else {
        format!("{stem} #{}", rng.gen_range(0..4))
    }
}

fn random_warning(rng: &mut ChaCha8Rng) -> ParsedWarning {
    let dir = DIRS.choose(rng).unwrap();
    let file = format!("F{}.java", rng.gen_range(0..3));
    ParsedWarning {
        message: random_message(rng),
        path: if dir.is_empty() { file } else { format!("{dir}/{file}") },
        line: rng.gen_bool(0.8).then(|| rng.gen_range(1..500)),
        severity: rng.gen_bool(0.9).then(|| SEVERITIES.choose(rng).unwrap().to_string()),
        type_tag: rng.gen_bool(0.6).then(|| TAGS.choose(rng).unwrap().to_string()),
        duplicate: rng.gen_bool(0.1),
        fingerprint: rng.gen(),
    }
}

pub fn build(seed: u64) -> Db {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = Store::open(":memory:").unwrap();
    let mut tools = Vec::new();
    for t in 0..3 {
        let spec = ToolSpec {
            name: format!("t{t}"),
            category: "c".into(),
            languages: vec!["any".into()],
            invocation_template: "x".into(),
            report_format: ReportFormat::Sarif,
            version: "1".into(),
            runner: Runner::Shell,
            success_exit_codes: vec![0],
            report_path: None,
        };
        tools.push(store.upsert_tool(&spec).unwrap());
    }
    let mut repos = Vec::new();
    for r in 0..2 {
        let repo = store.upsert_repo(&format!("r{r}"), &format!("file:///r{r}")).unwrap();
        repos.push(repo);
        let base = FixedOffset::east_opt(0).unwrap().with_ymd_and_hms(2022, 6, 1, 12, 0, 0).unwrap();
        for _ in 0..rng.gen_range(3..11) {
            let offset = FixedOffset::east_opt(rng.gen_range(-12..=12) * 3600).unwrap();
            // Few distinct minutes, so equal instants are common.
            let when = (base + chrono::Duration::minutes(rng.gen_range(0..8) * 30)).with_timezone(&offset);
            let hash: String = (0..40).map(|_| format!("{:x}", rng.gen_range(0..16))).collect();
            let commit = CommitMeta {
                hash,
                author_date: when,
                author_name: "A".into(),
                message: "m".into(),
                branch: "main".into(),
            };
            let snapshot = store.insert_snapshot(repo, &commit, 1).unwrap();
            for &tool in &tools {
                let state = match rng.gen_range(0..10) {
                    0 => continue,
                    1 => AttemptState { failures: 1, succeeded: false, skipped: false },
                    2 => AttemptState { failures: 3, succeeded: false, skipped: true },
                    _ => AttemptState { failures: 0, succeeded: true, skipped: false },
                };
                let warnings: Vec<ParsedWarning> = if state.succeeded {
                    (0..rng.gen_range(0..25)).map(|_| random_warning(&mut rng)).collect()
                } else {
                    Vec::new()
                };
                let run = sastwatch::store::RunWrite {
                    tool_id: tool,
                    snapshot_id: snapshot,
                    state,
                    started_at: "2022-06-01T00:00:00Z".into(),
                    duration_ms: 1,
                };
                store.insert_run(&run, &warnings).unwrap();
            }
        }
    }
    Db { store, repos, tools }
}

/// (instant, hash, run id, warning count) of every successful run.
fn successful_runs(db: &Db, repo: i64, tool: i64) -> Vec<(DateTime<FixedOffset>, String, i64, i64)> {
    let conn = db.store.connection();
    let mut stmt = conn
        .prepare(
            "SELECT s.author_date, s.hash, r.id, (SELECT COUNT(*) FROM warning w WHERE w.run_id = r.id)
             FROM snapshot s, run r WHERE r.snapshot_id = s.id AND s.repo_id = ? AND r.tool_id = ? AND r.success = 1",
        )
        .unwrap();
    let mut rows: Vec<_> = stmt
        .query_map([repo, tool], |r| Ok((r.get::<_, String>(0)?, r.get::<_, String>(1)?, r.get(2)?, r.get(3)?)))
        .unwrap()
        .map(|r| {
            let (d, h, id, n) = r.unwrap();
            (DateTime::parse_from_rfc3339(&d).unwrap(), h, id, n)
        })
        .collect();
    rows.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
    rows
}

fn oracle_hotspots(db: &Db, run: i64, depth: usize) -> BTreeMap<String, i64> {
    let sql = "
        WITH RECURSIVE split(id, rest, dirs, n) AS (
            SELECT id, path, '', 0 FROM warning WHERE run_id = ?1
            UNION ALL
            SELECT id,
                   substr(rest, instr(rest, '/') + 1),
                   CASE WHEN n = 0 THEN substr(rest, 1, instr(rest, '/') - 1)
                        ELSE dirs || '/' || substr(rest, 1, instr(rest, '/') - 1) END,
                   n + 1
            FROM split WHERE instr(rest, '/') > 0 AND n < ?2
        )
        SELECT CASE WHEN dirs = '' THEN '.' ELSE dirs END, COUNT(*)
        FROM split s
        WHERE n = (SELECT MAX(n) FROM split t WHERE t.id = s.id)
        GROUP BY 1";
    let conn = db.store.connection();
    let mut stmt = conn.prepare(sql).unwrap();
    let rows =
        stmt.query_map([run, depth as i64], |r| Ok((r.get(0)?, r.get(1)?))).unwrap().map(Result::unwrap).collect();
    rows
}

fn oracle_types(db: &Db, run: i64) -> BTreeMap<(String, TypeSource), i64> {
    let conn = db.store.connection();
    let mut stmt = conn.prepare("SELECT type_tag, message FROM warning WHERE run_id = ?").unwrap();
    let mut out = BTreeMap::new();
    for row in stmt.query_map([run], |r| Ok((r.get::<_, Option<String>>(0)?, r.get::<_, String>(1)?))).unwrap() {
        let (tag, message) = row.unwrap();
        let key = match tag {
            Some(t) => (t, TypeSource::TypeTag),
            None => (message.chars().take(80).collect(), TypeSource::MessagePrefix),
        };
        *out.entry(key).or_default() += 1;
    }
    out
}

fn oracle_page_ids(db: &Db, run: i64, prefix: Option<&str>, severity: Option<&str>) -> Vec<i64> {
    let conn = db.store.connection();
    let mut stmt = conn
        .prepare(
            "SELECT id FROM warning WHERE run_id = ?1
               AND (?2 IS NULL OR (?2 = '.' AND path NOT LIKE '%/%') OR path = ?2 OR path LIKE ?2 || '/%')
               AND (?3 IS NULL OR severity = ?3)
             ORDER BY id",
        )
        .unwrap();
    let ids =
        stmt.query_map(rusqlite::params![run, prefix, severity], |r| r.get(0)).unwrap().map(Result::unwrap).collect();
    ids
}

/// Every aggregation on `count` seeded random databases against the oracles
/// above. Panics on the first mismatch.
pub fn check_random_databases(count: u64) {
    for seed in 0..count {
        let db = build(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        for &repo in &db.repos {
            for &tool in &db.tools {
                let runs = successful_runs(&db, repo, tool);

                let trend = db.store.trend_series(repo, tool).unwrap();
                let expected: Vec<(String, i64)> = runs.iter().map(|r| (r.1.clone(), r.3)).collect();
                let got: Vec<(String, i64)> =
                    trend.iter().map(|p| (p.snapshot_hash.clone(), p.warning_count)).collect();
                assert_eq!(got, expected, "seed {seed} repo {repo} tool {tool}: trend");

                let latest = db.store.scope_run(repo, tool, None).unwrap();
                assert_eq!(latest.map(|(id, _)| id), runs.last().map(|r| r.2), "seed {seed}: latest scope");

                for (_, hash, run, _) in &runs {
                    let types = db.store.type_counts(repo, tool, Some(hash)).unwrap();
                    let got: BTreeMap<(String, TypeSource), i64> =
                        types.iter().map(|t| ((t.label.clone(), t.source), t.count)).collect();
                    assert_eq!(got.len(), types.len(), "seed {seed}: repeated type group");
                    assert_eq!(got, oracle_types(&db, *run), "seed {seed}: types at {hash}");
                    assert!(
                        types
                            .windows(2)
                            .all(|w| w[0].count > w[1].count || (w[0].count == w[1].count && w[0].label <= w[1].label)),
                        "seed {seed}: type order"
                    );

                    let trend_count = trend.iter().find(|p| &p.snapshot_hash == hash).unwrap().warning_count;
                    for depth in 1..=4 {
                        let hot = db.store.hotspots(repo, tool, Some(hash), depth).unwrap();
                        let got: BTreeMap<String, i64> = hot.iter().map(|h| (h.module_path.clone(), h.count)).collect();
                        assert_eq!(got, oracle_hotspots(&db, *run, depth), "seed {seed}: hotspots d={depth}");
                        assert!(hot.windows(2).all(|w| w[0].count >= w[1].count), "seed {seed}: hotspot order");
                        assert_eq!(hot.iter().map(|h| h.count).sum::<i64>(), trend_count, "seed {seed}: bucket sum");
                    }

                    let prefix = [None, Some("src"), Some("src/main/java/app"), Some("."), Some("sr"), Some("lib/")]
                        .choose(&mut rng)
                        .copied()
                        .unwrap();
                    let severity = [None, Some("HIGH"), Some("3")].choose(&mut rng).copied().unwrap();
                    let page_size = rng.gen_range(1..8);
                    let expected = oracle_page_ids(&db, *run, prefix.map(|p| p.trim_end_matches('/')), severity);
                    let mut collected = Vec::new();
                    for page in 1..=(expected.len() as u32 / page_size + 2) {
                        let filter = WarningFilter {
                            path_prefix: prefix.map(str::to_string),
                            severity: severity.map(str::to_string),
                            page,
                            page_size,
                        };
                        let p = db.store.warnings_page(repo, tool, Some(hash), &filter).unwrap();
                        assert_eq!(p.total, expected.len() as i64, "seed {seed}: total {prefix:?} {severity:?}");
                        assert!(p.rows.len() <= page_size as usize);
                        collected.extend(p.rows.iter().map(|r| r.id));
                    }
                    assert_eq!(collected, expected, "seed {seed}: pages {prefix:?} {severity:?}");
                }
            }
        }
    }
}
