//! Stage orchestration for the `hearsim` command.
//!
//! Each stage reads its predecessors' artifacts from `<output_dir>/<stage>/` and writes
//! its own together with a `manifest.json` recording the config hash, seed and file
//! digests.

pub mod config;
pub mod fixture;
pub mod manifest;
pub mod stages;

pub use config::{Overrides, PipelineConfig, Resolved};
pub use manifest::StageManifest;
pub use stages::{Pipeline, Stage};

/// Exit status when a stage finished but skipped more items than allowed.
pub const EXIT_TOO_MANY_SKIPPED: i32 = 3;

/// Stages whose skipped share exceeds `max_fraction`, as `(stage, fraction)`.
pub fn over_skip_limit(manifests: &[StageManifest], max_fraction: f64) -> Vec<(String, f64)> {
    manifests
        .iter()
        .filter(|m| m.skipped_fraction() > max_fraction)
        .map(|m| (m.stage.clone(), m.skipped_fraction()))
        .collect()
}
