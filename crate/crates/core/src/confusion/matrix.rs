use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::align::{EditKind, EditOp};
use crate::phoneme::Phoneme;

/// Original or transcribed side of a cell; `None` is the empty symbol.
pub type Symbol = Option<Phoneme>;

pub fn symbol_str(s: &Symbol) -> &str {
    s.as_ref().map_or("", Phoneme::as_str)
}

/// Counts of original-to-transcribed phoneme mappings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: BTreeMap<(Symbol, Symbol), u64>,
    matches: u64,
    substitutions: u64,
    deletions: u64,
    insertions: u64,
    count_matches: bool,
}

impl Default for ConfusionMatrix {
    fn default() -> Self {
        Self::new(true)
    }
}

impl ConfusionMatrix {
    /// `count_matches` controls whether matches land on the diagonal.
    pub fn new(count_matches: bool) -> Self {
        Self {
            counts: BTreeMap::new(),
            matches: 0,
            substitutions: 0,
            deletions: 0,
            insertions: 0,
            count_matches,
        }
    }

    pub fn accumulate(&mut self, ops: &[EditOp]) {
        for op in ops {
            self.add(op.ref_phoneme.clone(), op.hyp_phoneme.clone(), 1);
            debug_assert!(match op.kind {
                EditKind::Match => op.ref_phoneme == op.hyp_phoneme,
                _ => true,
            });
        }
    }

    /// Adds `count` observations of one mapping; the kind is implied by the cell.
    pub fn add(&mut self, original: Symbol, transcribed: Symbol, count: u64) {
        if count == 0 {
            return;
        }
        match (&original, &transcribed) {
            (None, None) => return,
            (Some(a), Some(b)) if a == b => {
                self.matches += count;
                if !self.count_matches {
                    return;
                }
            }
            (Some(_), Some(_)) => self.substitutions += count,
            (Some(_), None) => self.deletions += count,
            (None, Some(_)) => self.insertions += count,
        }
        *self.counts.entry((original, transcribed)).or_default() += count;
    }

    /// Associative merge of another matrix into this one.
    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for ((o, t), &c) in &other.counts {
            *self.counts.entry((o.clone(), t.clone())).or_default() += c;
        }
        self.matches += other.matches;
        self.substitutions += other.substitutions;
        self.deletions += other.deletions;
        self.insertions += other.insertions;
    }

    pub fn get(&self, original: &Symbol, transcribed: &Symbol) -> u64 {
        self.counts
            .get(&(original.clone(), transcribed.clone()))
            .copied()
            .unwrap_or(0)
    }

    pub fn cells(&self) -> impl Iterator<Item = (&Symbol, &Symbol, u64)> {
        self.counts.iter().map(|((o, t), &c)| (o, t, c))
    }

    pub fn total(&self, kind: EditKind) -> u64 {
        match kind {
            EditKind::Match => self.matches,
            EditKind::Substitution => self.substitutions,
            EditKind::Deletion => self.deletions,
            EditKind::Insertion => self.insertions,
        }
    }

    pub fn error_distribution(&self) -> ErrorDistribution {
        ErrorDistribution::from_counts(self.substitutions, self.deletions, self.insertions)
    }

    /// Non-match cells by count descending, ties by (original, transcribed).
    pub fn top_confusions(&self, n: usize) -> Vec<Confusion> {
        let mut cells: Vec<Confusion> = self
            .counts
            .iter()
            .filter(|((o, t), _)| o != t)
            .map(|((o, t), &count)| Confusion {
                original: o.clone(),
                transcribed: t.clone(),
                count,
            })
            .collect();
        // BTreeMap iteration is already key-ordered; a stable sort keeps that for ties.
        cells.sort_by(|a, b| b.count.cmp(&a.count));
        cells.truncate(n);
        cells
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Confusion {
    pub original: Symbol,
    pub transcribed: Symbol,
    pub count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeShare {
    pub count: u64,
    /// Percentage of all non-match operations.
    pub percent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorDistribution {
    pub total: u64,
    pub substitution: TypeShare,
    pub deletion: TypeShare,
    pub insertion: TypeShare,
}

impl ErrorDistribution {
    pub fn from_counts(sub: u64, del: u64, ins: u64) -> Self {
        let total = sub + del + ins;
        let share = |c: u64| TypeShare {
            count: c,
            percent: if total == 0 {
                0.0
            } else {
                100.0 * c as f64 / total as f64
            },
        };
        Self {
            total,
            substitution: share(sub),
            deletion: share(del),
            insertion: share(ins),
        }
    }

    pub fn share(&self, kind: EditKind) -> Option<TypeShare> {
        match kind {
            EditKind::Substitution => Some(self.substitution),
            EditKind::Deletion => Some(self.deletion),
            EditKind::Insertion => Some(self.insertion),
            EditKind::Match => None,
        }
    }
}

/// Rounds a percentage to one decimal place.
pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confusion::align::align;
    use crate::phoneme::{ph, seq};

    #[test]
    fn counts_substitutions_deletions_insertions() {
        let mut m = ConfusionMatrix::default();
        m.accumulate(&align(&seq("S IY1 T"), &seq("F IY1")).ops);
        m.accumulate(&align(&seq("K"), &seq("K AH0")).ops);
        assert_eq!(m.get(&Some(ph("S")), &Some(ph("F"))), 1);
        assert_eq!(m.get(&Some(ph("T")), &None), 1);
        assert_eq!(m.get(&None, &Some(ph("AH0"))), 1);
        assert_eq!(m.get(&Some(ph("IY1")), &Some(ph("IY1"))), 1);
        assert_eq!(m.total(EditKind::Match), 2);
        let no_diag = {
            let mut m = ConfusionMatrix::new(false);
            m.accumulate(&align(&seq("K"), &seq("K")).ops);
            m
        };
        assert_eq!(no_diag.cells().count(), 0);
        assert_eq!(no_diag.total(EditKind::Match), 1);
    }

    #[test]
    fn empty_ops_leave_matrix_unchanged() {
        let mut m = ConfusionMatrix::default();
        m.add(Some(ph("S")), Some(ph("F")), 3);
        let before = m.clone();
        m.accumulate(&[]);
        assert_eq!(m, before);
    }

    #[test]
    fn distribution_edge_cases() {
        let d = ErrorDistribution::from_counts(0, 0, 0);
        assert_eq!(d.substitution.percent, 0.0);
        let d = ErrorDistribution::from_counts(1, 0, 0);
        assert_eq!(
            (
                d.substitution.percent,
                d.deletion.percent,
                d.insertion.percent
            ),
            (100.0, 0.0, 0.0)
        );
    }

    #[test]
    fn equal_counts_rank_lexicographically() {
        let mut m = ConfusionMatrix::default();
        m.add(Some(ph("S")), Some(ph("K")), 134);
        m.add(Some(ph("M")), Some(ph("L")), 134);
        let top = m.top_confusions(10);
        assert_eq!(top[0].original, Some(ph("M")));
        assert_eq!(top[1].original, Some(ph("S")));
        assert_eq!(m.top_confusions(1).len(), 1);
    }
}
