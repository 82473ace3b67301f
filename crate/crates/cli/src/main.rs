use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use sastwatch::service::{self, logging, ConfigError, Overrides, PlatformConfig, ServeError};
use sastwatch::store::{Store, StoreError};

const EXIT_CONFIG: u8 = 1;
const EXIT_STORAGE: u8 = 2;
/// `analyze` finished but at least one repository could not be processed.
const EXIT_REPO_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "sastwatch", version, about = "Static-analysis history of Git repositories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one analysis cycle and print a JSON summary per repository.
    Analyze(Common),
    /// Run analysis cycles every poll interval until SIGINT/SIGTERM.
    Monitor(Common),
    /// Serve the read-only JSON API.
    Serve(Common),
    /// Print stored snapshot, run and warning counts per repository.
    Status(Common),
    /// Make skipped runs of one repository eligible again.
    ResetSkips {
        #[command(flatten)]
        common: Common,
        /// Repository name, as shown by `status`.
        #[arg(long)]
        repo: String,
    },
}

#[derive(Args)]
struct Common {
    /// Path to the TOML configuration file.
    config: PathBuf,
    /// Storage DSN, overrides SASTWATCH_DSN and the file.
    #[arg(long)]
    dsn: Option<String>,
    #[arg(long)]
    workdir: Option<PathBuf>,
    /// API listen address.
    #[arg(long)]
    bind: Option<String>,
    #[arg(long)]
    poll_interval_secs: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<PlatformConfig, Failure> {
        let overrides = Overrides {
            storage_dsn: self.dsn.clone(),
            workdir: self.workdir.clone(),
            api_bind: self.bind.clone(),
            poll_interval: self.poll_interval_secs.map(Duration::from_secs),
        };
        Ok(PlatformConfig::load(&self.config, &overrides)?)
    }
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Storage(String),
    RepoFailed,
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        Failure::Storage(e.to_string())
    }
}

impl From<ServeError> for Failure {
    fn from(e: ServeError) -> Self {
        match e {
            ServeError::Store(e) => e.into(),
            other => Failure::Config(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    logging::init_logging();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("sastwatch: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Storage(msg)) => {
            eprintln!("sastwatch: storage error: {msg}");
            ExitCode::from(EXIT_STORAGE)
        }
        Err(Failure::RepoFailed) => ExitCode::from(EXIT_REPO_FAILED),
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Analyze(common) => {
            let config = common.load()?;
            let summaries = service::analyze_once(&config)?;
            print_summaries(&summaries);
            if summaries.iter().any(|s| s.error.is_some()) {
                return Err(Failure::RepoFailed);
            }
        }
        Command::Monitor(common) => {
            let config = common.load()?;
            let flag = service::shutdown_flag().map_err(|e| Failure::Config(e.to_string()))?;
            service::monitor_loop(&config, &flag, print_summaries)?;
        }
        Command::Serve(common) => service::serve_api(&common.load()?)?,
        Command::Status(common) => {
            let config = common.load()?;
            let store = Store::open(&config.storage_dsn)?;
            for repo in store.repos()? {
                let s = store.status(repo.id)?;
                println!(
                    "{}: {} snapshots, {} runs succeeded, {} runs failed (pending retry), {} runs skipped, {} warnings",
                    repo.name, s.snapshots, s.runs_succeeded, s.runs_failed_pending, s.runs_skipped, s.warnings
                );
            }
        }
        Command::ResetSkips { common, repo } => {
            let config = common.load()?;
            let store = Store::open(&config.storage_dsn)?;
            let row =
                store.repo_by_name(&repo)?.ok_or_else(|| Failure::Config(format!("unknown repository {repo:?}")))?;
            let n = store.reset_skips(row.id)?;
            println!("{repo}: {n} skipped runs reset");
        }
    }
    Ok(())
}

fn print_summaries(summaries: &[service::CycleSummary]) {
    for s in summaries {
        println!("{}", s.to_json_line());
    }
}
