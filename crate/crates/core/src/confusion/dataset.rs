use std::path::Path;

use serde::{Deserialize, Serialize};

use super::align::{align, format_ops, parse_ops, EditKind, EditOp};
use super::matrix::{symbol_str, ConfusionMatrix, Symbol};
use crate::error::{Error, Result};
use crate::phoneme::{Phoneme, PhonemeSequence};

/// A confusion type: the error kind plus the phonemes on either side.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConfusionKey {
    pub kind: EditKind,
    pub clean: Symbol,
    pub hl: Symbol,
}

impl ConfusionKey {
    pub fn of(op: &EditOp) -> Option<Self> {
        (op.kind != EditKind::Match).then(|| ConfusionKey {
            kind: op.kind,
            clean: op.ref_phoneme.clone(),
            hl: op.hyp_phoneme.clone(),
        })
    }

    pub fn substitution(clean: Phoneme, hl: Phoneme) -> Self {
        Self {
            kind: EditKind::Substitution,
            clean: Some(clean),
            hl: Some(hl),
        }
    }

    pub fn deletion(clean: Phoneme) -> Self {
        Self {
            kind: EditKind::Deletion,
            clean: Some(clean),
            hl: None,
        }
    }

    pub fn insertion(hl: Phoneme) -> Self {
        Self {
            kind: EditKind::Insertion,
            clean: None,
            hl: Some(hl),
        }
    }

    /// `ErrorType_Clean_HL`, e.g. `Substitution_S_F` or `Deletion_Z_`.
    pub fn label(&self) -> String {
        format!(
            "{}_{}_{}",
            self.kind.name(),
            symbol_str(&self.clean),
            symbol_str(&self.hl)
        )
    }
}

/// One word under one degraded condition, compared against the reference transcription.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionRecord {
    pub word: String,
    pub condition: String,
    /// Normalized ASR output on the reference side (clean ASR or ground truth).
    pub clean_word: String,
    /// Normalized ASR output under the degraded condition.
    pub hl_word: String,
    pub clean_phonemes: PhonemeSequence,
    pub hl_phonemes: PhonemeSequence,
    pub ops: Vec<EditOp>,
}

impl ConfusionRecord {
    pub fn new(
        word: impl Into<String>,
        condition: impl Into<String>,
        clean_word: impl Into<String>,
        hl_word: impl Into<String>,
        clean_phonemes: PhonemeSequence,
        hl_phonemes: PhonemeSequence,
    ) -> Self {
        let ops = align(&clean_phonemes, &hl_phonemes).ops;
        Self {
            word: word.into(),
            condition: condition.into(),
            clean_word: clean_word.into(),
            hl_word: hl_word.into(),
            clean_phonemes,
            hl_phonemes,
            ops,
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = ConfusionKey> + '_ {
        self.ops.iter().filter_map(ConfusionKey::of)
    }
}

#[derive(Serialize, Deserialize)]
struct Row {
    word: String,
    condition: String,
    clean_word: String,
    hl_word: String,
    clean_phonemes: String,
    hl_phonemes: String,
    ops: String,
}

pub fn write_dataset(path: &Path, records: &[ConfusionRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(Row {
            word: r.word.clone(),
            condition: r.condition.clone(),
            clean_word: r.clean_word.clone(),
            hl_word: r.hl_word.clone(),
            clean_phonemes: r.clean_phonemes.to_string(),
            hl_phonemes: r.hl_phonemes.to_string(),
            ops: format_ops(&r.ops),
        })?;
    }
    w.flush()
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Vec<ConfusionRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row?;
        let line = i + 2;
        let wrap = |e: Error| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        };
        let clean_phonemes: PhonemeSequence = row.clean_phonemes.parse().map_err(wrap)?;
        let hl_phonemes: PhonemeSequence = row.hl_phonemes.parse().map_err(wrap)?;
        let ops = parse_ops(&row.ops, &clean_phonemes).map_err(wrap)?;
        out.push(ConfusionRecord {
            word: row.word,
            condition: row.condition,
            clean_word: row.clean_word,
            hl_word: row.hl_word,
            clean_phonemes,
            hl_phonemes,
            ops,
        });
    }
    Ok(out)
}

/// Confusion matrix over every record in the dataset.
pub fn matrix_of(records: &[ConfusionRecord], count_matches: bool) -> ConfusionMatrix {
    let mut m = ConfusionMatrix::new(count_matches);
    for r in records {
        m.accumulate(&r.ops);
    }
    m
}

pub fn write_matrix_csv(path: &Path, matrix: &ConfusionMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["original", "transcribed", "count"])?;
    for (o, t, c) in matrix.cells() {
        w.write_record([symbol_str(o), symbol_str(t), &c.to_string()])?;
    }
    w.flush()
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phoneme::{ph, seq};

    #[test]
    fn dataset_round_trip_and_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let recs = vec![
            ConfusionRecord::new("sat", "HL", "sat", "fat", seq("S AE1 T"), seq("F AE1 T")),
            ConfusionRecord::new(
                "girls",
                "HL",
                "girls",
                "girl",
                seq("G ER1 L Z"),
                seq("G ER1 L"),
            ),
        ];
        write_dataset(&path, &recs).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back, recs);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("M,M,M,D:Z"), "{text}");
        let keys: Vec<_> = back[0].keys().collect();
        assert_eq!(keys, vec![ConfusionKey::substitution(ph("S"), ph("F"))]);
        assert_eq!(back[1].keys().next().unwrap().label(), "Deletion_Z_");
    }
}
