use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::Parser;
use hearsim::config::{Overrides, Resolved};
use hearsim::{over_skip_limit, Pipeline, Stage, EXIT_TOO_MANY_SKIPPED};
use tracing_subscriber::EnvFilter;

/// Runs the hearing-loss simulation and test-curation pipeline.
#[derive(Parser, Debug)]
#[command(name = "hearsim", version)]
struct Cli {
    /// Pipeline config (TOML).
    #[arg(long, default_value = "hearsim.toml")]
    config: PathBuf,
    /// degrade, transcribe, analyze, curate, assess, simulate, roc, report, serve or all.
    #[arg(long, default_value = "all")]
    stage: String,
    #[arg(long)]
    seed: Option<u64>,
    /// SNR level in dB; repeat to give several. Replaces `snr_levels`.
    #[arg(long = "snr", allow_negative_numbers = true)]
    snr: Vec<f64>,
    /// mock, command or http.
    #[arg(long)]
    backend: Option<String>,
    /// Accept upstream artifacts written under a different config hash.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<ExitCode> {
    let overrides = Overrides {
        seed: cli.seed,
        snr_levels: cli.snr,
        backend: cli.backend,
        output_dir: cli.output_dir,
        ..Default::default()
    }
    .with_env();
    let resolved = Resolved::load(&cli.config, &overrides)?;
    if resolved.config.run.parallelism > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(resolved.config.run.parallelism)
            .build_global()?;
    }
    let max_skipped = resolved.config.run.max_skipped_fraction;
    let pipeline = Pipeline::new(resolved, cli.force);

    let manifests = if cli.stage == "all" {
        pipeline.run_all()?
    } else {
        let Some(stage) = Stage::from_name(&cli.stage) else {
            bail!("unknown stage {:?}", cli.stage);
        };
        pipeline.run(stage)?.into_iter().collect()
    };
    for m in &manifests {
        tracing::info!(
            "{}: {} of {} skipped, {} warnings",
            m.stage,
            m.skipped,
            m.total,
            m.warnings.len()
        );
    }
    let over = over_skip_limit(&manifests, max_skipped);
    if over.is_empty() {
        return Ok(ExitCode::SUCCESS);
    }
    for (stage, f) in over {
        eprintln!(
            "{stage}: {:.1}% of items skipped, above the {:.1}% limit",
            100.0 * f,
            100.0 * max_skipped
        );
    }
    Ok(ExitCode::from(EXIT_TOO_MANY_SKIPPED as u8))
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
