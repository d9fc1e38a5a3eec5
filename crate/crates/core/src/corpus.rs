//! `word,wav_path` corpus manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::dsp::{read_wav, AudioBuffer, CANONICAL_SAMPLE_RATE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub word: String,
    /// Resolved against the manifest's directory when relative.
    pub wav_path: PathBuf,
}

#[derive(Deserialize)]
struct Row {
    word: String,
    wav_path: String,
}

pub fn read_manifest(path: &Path) -> Result<Vec<CorpusEntry>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row?;
        let word = row.word.trim().to_lowercase();
        if word.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                message: "empty word".into(),
            });
        }
        let p = PathBuf::from(row.wav_path.trim());
        out.push(CorpusEntry {
            word,
            wav_path: if p.is_absolute() { p } else { base.join(p) },
        });
    }
    Ok(out)
}

/// Loads one recording per word at the canonical rate. The first entry for a word wins.
pub fn load_recordings(entries: &[CorpusEntry]) -> Result<BTreeMap<String, AudioBuffer<f64>>> {
    let mut out = BTreeMap::new();
    for e in entries {
        if out.contains_key(&e.word) {
            continue;
        }
        let audio = read_wav(&e.wav_path, Some(CANONICAL_SAMPLE_RATE))?;
        out.insert(e.word.clone(), audio);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::write_wav;

    #[test]
    fn relative_paths_resolve_against_manifest() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("wav")).unwrap();
        let a = AudioBuffer::new(vec![0.0, 0.25, -0.25, 0.0], 16_000).unwrap();
        write_wav(&a, &dir.path().join("wav/sat.wav")).unwrap();
        let m = dir.path().join("corpus.csv");
        std::fs::write(&m, "word,wav_path\nSat,wav/sat.wav\nsat,wav/other.wav\n").unwrap();
        let entries = read_manifest(&m).unwrap();
        assert_eq!(entries[0].word, "sat");
        assert_eq!(entries[0].wav_path, dir.path().join("wav/sat.wav"));
        let rec = load_recordings(&entries).unwrap();
        assert_eq!(rec.len(), 1);
        assert_eq!(rec["sat"].len(), 4);
    }
}
