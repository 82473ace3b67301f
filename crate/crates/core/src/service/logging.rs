use tracing_subscriber::EnvFilter;

/// Log filter variable; defaults to `info`.
pub const LOG_ENV: &str = "SASTWATCH_LOG";

/// Structured logging to stderr, one JSON object per event.
pub fn init_logging() {
    let filter = EnvFilter::try_from_env(LOG_ENV).unwrap_or_else(|_| EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt()
        .json()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_current_span(false)
        .try_init();
}
