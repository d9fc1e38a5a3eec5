use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phoneme::{Phoneme, PhonemeSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EditKind {
    Match,
    Substitution,
    Deletion,
    Insertion,
}

impl EditKind {
    pub fn name(self) -> &'static str {
        match self {
            EditKind::Match => "Match",
            EditKind::Substitution => "Substitution",
            EditKind::Deletion => "Deletion",
            EditKind::Insertion => "Insertion",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "Match" => Some(EditKind::Match),
            "Substitution" => Some(EditKind::Substitution),
            "Deletion" => Some(EditKind::Deletion),
            "Insertion" => Some(EditKind::Insertion),
            _ => None,
        }
    }
}

impl fmt::Display for EditKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One step of an alignment. `position` is the index in the reference sequence the
/// step consumes (for insertions, the reference index it precedes).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EditOp {
    pub kind: EditKind,
    pub ref_phoneme: Option<Phoneme>,
    pub hyp_phoneme: Option<Phoneme>,
    pub position: usize,
}

impl EditOp {
    fn matched(p: &Phoneme, position: usize) -> Self {
        Self {
            kind: EditKind::Match,
            ref_phoneme: Some(p.clone()),
            hyp_phoneme: Some(p.clone()),
            position,
        }
    }

    fn substituted(r: &Phoneme, h: &Phoneme, position: usize) -> Self {
        Self {
            kind: EditKind::Substitution,
            ref_phoneme: Some(r.clone()),
            hyp_phoneme: Some(h.clone()),
            position,
        }
    }

    fn deleted(r: &Phoneme, position: usize) -> Self {
        Self {
            kind: EditKind::Deletion,
            ref_phoneme: Some(r.clone()),
            hyp_phoneme: None,
            position,
        }
    }

    fn inserted(h: &Phoneme, position: usize) -> Self {
        Self {
            kind: EditKind::Insertion,
            ref_phoneme: None,
            hyp_phoneme: Some(h.clone()),
            position,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    pub ops: Vec<EditOp>,
    pub distance: usize,
    pub per: f64,
}

impl AlignmentResult {
    pub fn count(&self, kind: EditKind) -> usize {
        self.ops.iter().filter(|o| o.kind == kind).count()
    }
}

/// Minimum unit-cost alignment of `hyp` against `reference` with a full backtrace.
///
/// When several optimal paths exist the backtrace prefers, at every cell,
/// Match, then Substitution, then Deletion, then Insertion.
pub fn align(reference: &PhonemeSequence, hyp: &PhonemeSequence) -> AlignmentResult {
    let r = reference.tokens();
    let h = hyp.tokens();
    let (n, m) = (r.len(), h.len());
    let width = m + 1;
    let mut d = vec![0usize; (n + 1) * width];
    for i in 0..=n {
        d[i * width] = i;
    }
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = d[(i - 1) * width + j - 1] + usize::from(r[i - 1] != h[j - 1]);
            let up = d[(i - 1) * width + j] + 1;
            let left = d[i * width + j - 1] + 1;
            d[i * width + j] = diag.min(up).min(left);
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * width + j];
        if i > 0 && j > 0 {
            let diag = d[(i - 1) * width + j - 1];
            if r[i - 1] == h[j - 1] && diag == here {
                ops.push(EditOp::matched(&r[i - 1], i - 1));
                i -= 1;
                j -= 1;
                continue;
            }
            if diag + 1 == here {
                ops.push(EditOp::substituted(&r[i - 1], &h[j - 1], i - 1));
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[(i - 1) * width + j] + 1 == here {
            ops.push(EditOp::deleted(&r[i - 1], i - 1));
            i -= 1;
        } else {
            ops.push(EditOp::inserted(&h[j - 1], i));
            j -= 1;
        }
    }
    ops.reverse();

    let distance = d[n * width + m];
    AlignmentResult {
        ops,
        distance,
        per: distance as f64 / n.max(1) as f64,
    }
}

/// Applies `ops` to `reference`, returning the hypothesis they describe.
pub fn replay(reference: &PhonemeSequence, ops: &[EditOp]) -> Result<PhonemeSequence> {
    let r = reference.tokens();
    let mut out = Vec::with_capacity(r.len());
    let mut i = 0;
    for op in ops {
        match op.kind {
            EditKind::Insertion => {
                out.push(op.hyp_phoneme.clone().ok_or_else(|| bad_op(op))?);
            }
            kind => {
                let cur = r.get(i).ok_or_else(|| bad_op(op))?;
                if op.ref_phoneme.as_ref() != Some(cur) {
                    return Err(bad_op(op));
                }
                match kind {
                    EditKind::Match => out.push(cur.clone()),
                    EditKind::Substitution => {
                        out.push(op.hyp_phoneme.clone().ok_or_else(|| bad_op(op))?)
                    }
                    _ => {}
                }
                i += 1;
            }
        }
    }
    if i != r.len() {
        return Err(Error::validation(
            "edit ops do not consume the whole reference",
        ));
    }
    Ok(PhonemeSequence::new(out))
}

fn bad_op(op: &EditOp) -> Error {
    Error::validation(format!("edit op {op:?} does not fit the reference"))
}

/// Compact trace form, e.g. `M,S:S>F,M,D:T,I:AH0`.
pub fn format_ops(ops: &[EditOp]) -> String {
    ops.iter()
        .map(|op| match (op.kind, &op.ref_phoneme, &op.hyp_phoneme) {
            (EditKind::Match, _, _) => "M".to_string(),
            (EditKind::Substitution, Some(r), Some(h)) => format!("S:{r}>{h}"),
            (EditKind::Deletion, Some(r), _) => format!("D:{r}"),
            (EditKind::Insertion, _, Some(h)) => format!("I:{h}"),
            _ => "?".to_string(),
        })
        .collect::<Vec<_>>()
        .join(",")
}

/// Parses the compact trace against its reference sequence.
pub fn parse_ops(s: &str, reference: &PhonemeSequence) -> Result<Vec<EditOp>> {
    let r = reference.tokens();
    let mut ops = Vec::new();
    let mut i = 0;
    for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let at = |i: usize| {
            r.get(i)
                .ok_or_else(|| Error::validation(format!("op {tok:?} past end of reference")))
        };
        let op = if tok == "M" {
            let p = at(i)?;
            EditOp::matched(p, i)
        } else if let Some(rest) = tok.strip_prefix("S:") {
            let (a, b) = rest
                .split_once('>')
                .ok_or_else(|| Error::validation(format!("bad substitution {tok:?}")))?;
            EditOp::substituted(&Phoneme::parse(a)?, &Phoneme::parse(b)?, i)
        } else if let Some(rest) = tok.strip_prefix("D:") {
            EditOp::deleted(&Phoneme::parse(rest)?, i)
        } else if let Some(rest) = tok.strip_prefix("I:") {
            ops.push(EditOp::inserted(&Phoneme::parse(rest)?, i));
            continue;
        } else {
            return Err(Error::validation(format!("unknown op {tok:?}")));
        };
        i += 1;
        ops.push(op);
    }
    replay(reference, &ops)?;
    Ok(ops)
}
