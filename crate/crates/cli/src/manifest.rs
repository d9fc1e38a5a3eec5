use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Written last into every stage directory. Lists the stage's own files with their
/// digests and the upstream manifests it consumed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
    /// Upstream stage name to the `config_hash` found in its manifest.
    pub inputs: BTreeMap<String, String>,
    /// Path relative to the stage directory to SHA-256.
    pub files: BTreeMap<String, String>,
    pub total: usize,
    pub skipped: usize,
    pub warnings: Vec<String>,
}

impl StageManifest {
    pub fn skipped_fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.skipped as f64 / self.total as f64
        }
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Every regular file under `dir` except the manifest, keyed by `/`-separated relative path.
pub fn digest_tree(dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).with_context(|| format!("listing {}", d.display()))? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path.strip_prefix(dir).expect("under dir");
            let key = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            if key != MANIFEST_FILE {
                out.insert(key, sha256_file(&path)?);
            }
        }
    }
    Ok(out)
}

pub fn write_manifest(dir: &Path, manifest: &StageManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)? + "\n";
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_manifest(dir: &Path) -> Result<Option<StageManifest>> {
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path)?;
    Ok(Some(
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
    ))
}

/// Loads an upstream manifest, failing with the stage to run when it is absent and
/// refusing a different config hash unless `force` is set.
pub fn require_upstream(
    output_dir: &Path,
    stage: &str,
    config_hash: &str,
    force: bool,
) -> Result<(PathBuf, StageManifest)> {
    let dir = output_dir.join(stage);
    let Some(m) = read_manifest(&dir)? else {
        bail!(
            "missing {stage} artifacts in {}: run {stage} first",
            output_dir.display()
        );
    };
    if m.config_hash != config_hash && !force {
        bail!(
            "{stage} artifacts were produced with config {} but the current config is {}; \
             rerun {stage} or pass --force",
            short(&m.config_hash),
            short(config_hash)
        );
    }
    Ok((dir, m))
}

fn short(hash: &str) -> &str {
    &hash[..hash.len().min(12)]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(hash: &str) -> StageManifest {
        StageManifest {
            stage: "curate".into(),
            config_hash: hash.into(),
            seed: 1,
            inputs: BTreeMap::new(),
            files: BTreeMap::new(),
            total: 4,
            skipped: 1,
            warnings: vec![],
        }
    }

    #[test]
    fn upstream_checks() {
        let dir = tempfile::tempdir().unwrap();
        let err = require_upstream(dir.path(), "curate", "abc", false).unwrap_err();
        assert!(err.to_string().contains("run curate first"));

        std::fs::create_dir(dir.path().join("curate")).unwrap();
        write_manifest(&dir.path().join("curate"), &manifest("abc")).unwrap();
        assert!(require_upstream(dir.path(), "curate", "abc", false).is_ok());
        let err = require_upstream(dir.path(), "curate", "def", false).unwrap_err();
        assert!(err.to_string().contains("--force"));
        assert!(require_upstream(dir.path(), "curate", "def", true).is_ok());
    }

    #[test]
    fn tree_digest_skips_manifest() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("sub")).unwrap();
        std::fs::write(dir.path().join("sub/a.txt"), "x").unwrap();
        std::fs::write(dir.path().join(MANIFEST_FILE), "{}").unwrap();
        let t = digest_tree(dir.path()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(
            t["sub/a.txt"],
            "2d711642b726b04401627ca9fbac32f5c8530fb1903cc4db02258717921a4881"
        );
        assert_eq!(manifest("h").skipped_fraction(), 0.25);
    }
}
