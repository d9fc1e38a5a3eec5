use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hearsim_core::asr::{BackendConfig, ChoiceMode, MockBackendConfig};
use hearsim_core::curation::CurationConfig;
use hearsim_core::diagnostics::{CohortConfig, PsychometricParams, DEFAULT_TRIALS};
use hearsim_core::dsp::{Audiogram, MixSpec, DEFAULT_LEVEL_DBFS, DEFAULT_NUM_TAPS};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Replaces the backend command line (program plus whitespace-separated arguments).
pub const BACKEND_CMD_ENV: &str = "HEARSIM_BACKEND_CMD";
/// Replaces the HTTP backend URL.
pub const BACKEND_URL_ENV: &str = "HEARSIM_BACKEND_URL";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// CSV `word,wav_path`.
    pub corpus_manifest: PathBuf,
    /// CMUdict-format pronouncing dictionary.
    pub lexicon: PathBuf,
    /// Built-in profile names (`Normal`, `Mild`, `Moderate`) or audiogram JSON paths.
    /// The first one is the listener profile for assessment and the cohort base.
    #[serde(default = "default_audiograms")]
    pub audiograms: Vec<String>,
    #[serde(default = "default_snr_levels")]
    pub snr_levels: Vec<f64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub stimulus: StimulusConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub curation: CurationConfig,
    /// JSON phoneme-to-band table replacing the built-in frequency-relevance map.
    #[serde(default)]
    pub relevance_map: Option<PathBuf>,
    #[serde(default)]
    pub assess: AssessConfig,
    #[serde(default)]
    pub psychometric: PsychometricParams,
    #[serde(default)]
    pub cohort: CohortSection,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub service: ServiceSection,
}

fn default_audiograms() -> Vec<String> {
    vec!["Moderate".into()]
}

fn default_snr_levels() -> Vec<f64> {
    vec![5.0, 10.0, 20.0]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StimulusConfig {
    pub level_dbfs: f64,
    pub lead_in_s: f64,
    pub ramp_s: f64,
    pub num_taps: usize,
}

impl Default for StimulusConfig {
    fn default() -> Self {
        let mix = MixSpec::default();
        Self {
            level_dbfs: DEFAULT_LEVEL_DBFS,
            lead_in_s: mix.lead_in_s,
            ramp_s: mix.ramp_s,
            num_taps: DEFAULT_NUM_TAPS,
        }
    }
}

impl StimulusConfig {
    pub fn mix(&self, snr_db: f64) -> MixSpec {
        MixSpec {
            snr_db,
            lead_in_s: self.lead_in_s,
            ramp_s: self.ramp_s,
        }
    }
}

/// What the degraded transcriptions are compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// The recognizer's output on clean speech.
    #[default]
    CleanAsr,
    /// The lexicon pronunciation of the presented word.
    GroundTruth,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub reference: Reference,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssessConfig {
    pub trials_per_condition: usize,
    pub threshold_pp: f64,
    pub choice: ChoiceMode,
}

impl Default for AssessConfig {
    fn default() -> Self {
        Self {
            trials_per_condition: DEFAULT_TRIALS,
            threshold_pp: 5.0,
            choice: ChoiceMode::Deterministic,
        }
    }
}

/// Which per-item response probabilities drive the cohort simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CohortModel {
    #[default]
    Psychometric,
    /// NH and HL recognizer accuracies from the assess stage at `cohort.snr_db`.
    Asr,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortSection {
    #[serde(flatten)]
    pub params: CohortConfig,
    pub model: CohortModel,
    /// Battery subset sizes to simulate; sizes beyond the battery are skipped.
    pub test_lengths: Vec<usize>,
    pub snr_db: f64,
}

impl Default for CohortSection {
    fn default() -> Self {
        Self {
            params: CohortConfig::default(),
            model: CohortModel::default(),
            test_lengths: vec![50, 100, 200],
            snr_db: 10.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Worker threads; 0 uses one per core.
    pub parallelism: usize,
    /// Largest tolerated share of skipped items before the exit code signals failure.
    pub max_skipped_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            parallelism: 0,
            max_skipped_fraction: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSection {
    pub port: u16,
    pub snr_db: f64,
}

impl Default for ServiceSection {
    fn default() -> Self {
        Self {
            port: 8080,
            snr_db: 10.0,
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub snr_levels: Vec<f64>,
    pub backend: Option<String>,
    pub output_dir: Option<PathBuf>,
    pub backend_cmd: Option<String>,
    pub backend_url: Option<String>,
}

impl Overrides {
    /// Picks up the backend environment variables.
    pub fn with_env(mut self) -> Self {
        self.backend_cmd = std::env::var(BACKEND_CMD_ENV)
            .ok()
            .filter(|s| !s.trim().is_empty());
        self.backend_url = std::env::var(BACKEND_URL_ENV)
            .ok()
            .filter(|s| !s.trim().is_empty());
        self
    }
}

/// A parsed configuration with overrides applied and paths made absolute.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: PipelineConfig,
    pub hash: String,
    pub base_dir: PathBuf,
}

impl Resolved {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Self::from_str(&text, &base, overrides)
            .with_context(|| format!("in config {}", path.display()))
    }

    pub fn from_str(text: &str, base_dir: &Path, overrides: &Overrides) -> Result<Self> {
        let mut config: PipelineConfig = toml::from_str(text)?;
        apply_overrides(&mut config, overrides)?;
        validate(&config)?;
        let hash = config_hash(&config)?;

        let abs = |p: &Path| {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base_dir.join(p)
            }
        };
        config.corpus_manifest = abs(&config.corpus_manifest);
        config.lexicon = abs(&config.lexicon);
        config.relevance_map = config.relevance_map.as_deref().map(abs);
        config.output_dir = match &overrides.output_dir {
            Some(o) => o.clone(),
            None => abs(&config.output_dir),
        };
        config.audiograms = config
            .audiograms
            .iter()
            .map(|a| {
                if Audiogram::builtin(a).is_some() {
                    a.clone()
                } else {
                    abs(Path::new(a)).to_string_lossy().into_owned()
                }
            })
            .collect();
        Ok(Self {
            config,
            hash,
            base_dir: base_dir.to_path_buf(),
        })
    }

    pub fn audiograms(&self) -> Result<Vec<Audiogram>> {
        self.config
            .audiograms
            .iter()
            .map(|a| match Audiogram::builtin(a) {
                Some(g) => Ok(g),
                None => {
                    Audiogram::load(Path::new(a)).with_context(|| format!("loading audiogram {a}"))
                }
            })
            .collect()
    }
}

fn apply_overrides(config: &mut PipelineConfig, o: &Overrides) -> Result<()> {
    if let Some(seed) = o.seed {
        config.seed = seed;
    }
    if !o.snr_levels.is_empty() {
        config.snr_levels = o.snr_levels.clone();
    }
    let command_from_env = |cmd: &str| -> Result<BackendConfig> {
        let mut parts = cmd.split_whitespace().map(str::to_string);
        let program = parts.next().context("empty backend command")?;
        Ok(BackendConfig::Command {
            program,
            args: parts.collect(),
            timeout_s: hearsim_core::asr::DEFAULT_TIMEOUT_S,
        })
    };
    match o.backend.as_deref() {
        None => {}
        Some("mock") => {
            if !matches!(config.backend, BackendConfig::Mock(_)) {
                config.backend = BackendConfig::Mock(MockBackendConfig::default());
            }
        }
        Some("command") => {
            if !matches!(config.backend, BackendConfig::Command { .. }) {
                let cmd = o.backend_cmd.as_deref().with_context(|| {
                    format!(
                        "--backend command needs a [backend] command section or {BACKEND_CMD_ENV}"
                    )
                })?;
                config.backend = command_from_env(cmd)?;
            }
        }
        Some("http") => {
            if !matches!(config.backend, BackendConfig::Http { .. }) {
                let url = o.backend_url.clone().with_context(|| {
                    format!("--backend http needs a [backend] http section or {BACKEND_URL_ENV}")
                })?;
                config.backend = BackendConfig::Http {
                    url,
                    timeout_s: hearsim_core::asr::DEFAULT_TIMEOUT_S,
                };
            }
        }
        Some(other) => bail!("unknown backend {other:?}; expected mock, command or http"),
    }
    if let BackendConfig::Command { program, args, .. } = &mut config.backend {
        if let Some(cmd) = &o.backend_cmd {
            if let BackendConfig::Command {
                program: p,
                args: a,
                ..
            } = command_from_env(cmd)?
            {
                *program = p;
                *args = a;
            }
        }
    }
    if let BackendConfig::Http { url, .. } = &mut config.backend {
        if let Some(u) = &o.backend_url {
            *url = u.clone();
        }
    }
    Ok(())
}

fn validate(c: &PipelineConfig) -> Result<()> {
    if c.snr_levels.is_empty() {
        bail!("snr_levels must not be empty");
    }
    if c.snr_levels.iter().any(|s| !s.is_finite()) {
        bail!("snr_levels must be finite");
    }
    if c.audiograms.is_empty() {
        bail!("at least one audiogram is required");
    }
    if c.assess.trials_per_condition == 0 {
        bail!("assess.trials_per_condition must be at least 1");
    }
    if !(0.0..=1.0).contains(&c.run.max_skipped_fraction) {
        bail!("run.max_skipped_fraction must lie in [0, 1]");
    }
    c.curation.validate()?;
    c.psychometric.validate()?;
    Ok(())
}

/// SHA-256 over the canonical JSON form, with the output directory left out so the
/// same configuration hashes identically wherever its artifacts are written.
pub fn config_hash(config: &PipelineConfig) -> Result<String> {
    let mut value = serde_json::to_value(config)?;
    if let Some(obj) = value.as_object_mut() {
        obj.remove("output_dir");
    }
    let canonical = serde_json::to_string(&value)?;
    Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
}
