use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use hearsim_service::{serve, AppState, ServiceConfig};

/// Serves the forced-choice listening test over HTTP.
#[derive(Parser)]
#[command(name = "hearsim-service", version)]
struct Args {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Battery CSV written by the curate stage.
    #[arg(long)]
    battery: PathBuf,
    /// Item-diagnostics CSV written by the assess stage.
    #[arg(long)]
    diagnostics: PathBuf,
    /// `word,wav_path` corpus manifest.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    snr: f64,
    /// Directory for the JSON-lines session logs.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    let args = Args::parse();
    let state = match ServiceConfig::load(
        &args.battery,
        &args.diagnostics,
        &args.corpus,
        args.snr,
        args.output_dir,
        args.seed,
    )
    .and_then(AppState::new)
    {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let rt = tokio::runtime::Runtime::new().expect("tokio runtime");
    match rt.block_on(serve(state, args.port)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
