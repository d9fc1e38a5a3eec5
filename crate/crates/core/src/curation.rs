//! Two-phase selection of the forced-choice word-pair battery from a confusion dataset.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::confusion::{
    symbol_str, ConfusionKey, ConfusionRecord, EditKind, FrequencyRelevance, RelevanceMap,
};
use crate::edit::{levenshtein, word_distance};
use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::phoneme::{Phoneme, PhonemeSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DistractorSource {
    #[serde(rename = "ASR-observed")]
    AsrObserved,
    #[serde(rename = "phonetically-generated")]
    PhoneticallyGenerated,
}

impl DistractorSource {
    pub fn name(self) -> &'static str {
        match self {
            DistractorSource::AsrObserved => "ASR-observed",
            DistractorSource::PhoneticallyGenerated => "phonetically-generated",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "ASR-observed" => Some(DistractorSource::AsrObserved),
            "phonetically-generated" => Some(DistractorSource::PhoneticallyGenerated),
            _ => None,
        }
    }
}

impl fmt::Display for DistractorSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One battery item: a target word and the distractor it is confusable with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidatePair {
    pub target: String,
    pub distractor: String,
    pub key: ConfusionKey,
    pub source: DistractorSource,
    pub relevance: FrequencyRelevance,
}

impl CandidatePair {
    pub fn error_type(&self) -> EditKind {
        self.key.kind
    }

    pub fn clean_phoneme(&self) -> Option<&Phoneme> {
        self.key.clean.as_ref()
    }

    pub fn hl_phoneme(&self) -> Option<&Phoneme> {
        self.key.hl.as_ref()
    }
}

/// Desired share of each error type in the final battery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetMix {
    pub sub: f64,
    pub del: f64,
    pub ins: f64,
}

impl Default for TargetMix {
    fn default() -> Self {
        Self {
            sub: 0.527,
            del: 0.349,
            ins: 0.124,
        }
    }
}

impl TargetMix {
    pub fn share(&self, kind: EditKind) -> f64 {
        match kind {
            EditKind::Substitution => self.sub,
            EditKind::Deletion => self.del,
            EditKind::Insertion => self.ins,
            EditKind::Match => 0.0,
        }
    }
}

pub const ERROR_KINDS: [EditKind; 3] = [
    EditKind::Substitution,
    EditKind::Deletion,
    EditKind::Insertion,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurationConfig {
    pub total_items: usize,
    pub phase1_top_k: usize,
    pub max_word_lev: usize,
    pub max_phoneme_lev: usize,
    pub target_mix: TargetMix,
}

impl Default for CurationConfig {
    fn default() -> Self {
        Self {
            total_items: 200,
            phase1_top_k: 10,
            max_word_lev: 2,
            max_phoneme_lev: 8,
            target_mix: TargetMix::default(),
        }
    }
}

impl CurationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_items == 0 || self.phase1_top_k == 0 {
            return Err(Error::validation(
                "total_items and phase1_top_k must be positive",
            ));
        }
        let m = self.target_mix;
        if [m.sub, m.del, m.ins].iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::validation("target_mix shares must be non-negative"));
        }
        if (m.sub + m.del + m.ins - 1.0).abs() > 1e-3 {
            return Err(Error::validation(format!(
                "target_mix must sum to 1, got {}",
                m.sub + m.del + m.ins
            )));
        }
        Ok(())
    }

    /// Phase-1 items per confusion type.
    pub fn phase1_quota(&self) -> usize {
        self.total_items / self.phase1_top_k / 2
    }

    /// Item counts per error type (substitution, deletion, insertion).
    pub fn type_targets(&self) -> [usize; 3] {
        let m = self.target_mix;
        let v = apportion(self.total_items, &[m.sub, m.del, m.ins]);
        [v[0], v[1], v[2]]
    }
}

/// Largest-remainder (Hamilton) apportionment of `total` seats by `weights`.
/// Equal remainders go to the earlier entry.
pub fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || !(sum > 0.0) {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut seats: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut left = total.saturating_sub(seats.iter().sum());
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for i in order.into_iter().cycle() {
        if left == 0 {
            break;
        }
        seats[i] += 1;
        left -= 1;
    }
    seats
}

/// Why a candidate pair was rejected; checks run in declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rejection {
    SameWord,
    WordLevenshtein(usize),
    NotInLexicon(String),
    SyllableMismatch(usize, usize),
    PhonemeLevenshtein(usize),
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::SameWord => write!(f, "target equals distractor"),
            Rejection::WordLevenshtein(d) => write!(f, "word_lev {d}"),
            Rejection::NotInLexicon(w) => write!(f, "{w:?} not in lexicon"),
            Rejection::SyllableMismatch(a, b) => write!(f, "syllables {a} != {b}"),
            Rejection::PhonemeLevenshtein(d) => write!(f, "phoneme_lev {d}"),
        }
    }
}

/// Applies the battery filters to `(target, distractor)`.
pub fn filter_pair(
    target: &str,
    distractor: &str,
    lex: &Lexicon,
    cfg: &CurationConfig,
) -> Result<(), Rejection> {
    if target.eq_ignore_ascii_case(distractor) {
        return Err(Rejection::SameWord);
    }
    let d = word_distance(&target.to_lowercase(), &distractor.to_lowercase());
    if d > cfg.max_word_lev {
        return Err(Rejection::WordLevenshtein(d));
    }
    let pron = |w: &str| {
        lex.primary(w)
            .ok_or_else(|| Rejection::NotInLexicon(w.to_string()))
    };
    let (pt, pd) = (pron(target)?, pron(distractor)?);
    let (st, sd) = (pt.syllable_count(), pd.syllable_count());
    if st != sd {
        return Err(Rejection::SyllableMismatch(st, sd));
    }
    let d = levenshtein(pt.tokens(), pd.tokens());
    if d > cfg.max_phoneme_lev {
        return Err(Rejection::PhonemeLevenshtein(d));
    }
    Ok(())
}

pub fn filter_candidate(
    pair: &CandidatePair,
    lex: &Lexicon,
    cfg: &CurationConfig,
) -> Result<(), Rejection> {
    filter_pair(&pair.target, &pair.distractor, lex, cfg)
}

/// Degraded-condition ASR outputs per target word, with the confusion keys each
/// output exhibited.
#[derive(Debug, Clone, Default)]
pub struct ObservedOutputs {
    by_target: HashMap<String, Vec<(String, BTreeSet<ConfusionKey>)>>,
}

impl ObservedOutputs {
    pub fn from_records(records: &[ConfusionRecord]) -> Self {
        let mut by_target: HashMap<String, Vec<(String, BTreeSet<ConfusionKey>)>> = HashMap::new();
        for r in records {
            if r.hl_word.is_empty() {
                continue;
            }
            let keys: BTreeSet<ConfusionKey> = r.keys().collect();
            let entry = by_target.entry(r.word.to_lowercase()).or_default();
            match entry.iter_mut().find(|(w, _)| *w == r.hl_word) {
                Some((_, ks)) => ks.extend(keys),
                None => entry.push((r.hl_word.clone(), keys)),
            }
        }
        Self { by_target }
    }

    /// Output words recorded for `target` whose alignment contains `key`.
    pub fn instantiating(&self, target: &str, key: &ConfusionKey) -> Vec<&str> {
        self.by_target
            .get(&target.to_lowercase())
            .map(|v| {
                v.iter()
                    .filter(|(_, ks)| ks.contains(key))
                    .map(|(w, _)| w.as_str())
                    .collect()
            })
            .unwrap_or_default()
    }
}

fn same_base(a: &Phoneme, b: &Phoneme) -> bool {
    a.base() == b.base()
}

/// Pronunciations produced by applying `key` once to `pron`, at every position where
/// it applies.
pub fn apply_key(pron: &PhonemeSequence, key: &ConfusionKey) -> Vec<PhonemeSequence> {
    let toks = pron.tokens();
    let mut out = Vec::new();
    match (key.kind, &key.clean, &key.hl) {
        (EditKind::Substitution, Some(c), Some(h)) => {
            for (i, p) in toks.iter().enumerate() {
                if same_base(p, c) {
                    let mut v = toks.to_vec();
                    v[i] = h.clone();
                    out.push(PhonemeSequence::new(v));
                }
            }
        }
        (EditKind::Deletion, Some(c), _) => {
            for (i, p) in toks.iter().enumerate() {
                if same_base(p, c) {
                    let mut v = toks.to_vec();
                    v.remove(i);
                    out.push(PhonemeSequence::new(v));
                }
            }
        }
        (EditKind::Insertion, _, Some(h)) => {
            for i in 0..=toks.len() {
                let mut v = toks.to_vec();
                v.insert(i, h.clone());
                out.push(PhonemeSequence::new(v));
            }
        }
        _ => {}
    }
    out
}

/// Distractors for `target` under confusion `key`: recorded ASR outputs first, then
/// reverse-lookup hits of the edited pronunciation in lexicographic order.
pub fn generate_distractors(
    target: &str,
    key: &ConfusionKey,
    lex: &Lexicon,
    observed: &ObservedOutputs,
) -> Vec<CandidatePair> {
    let target_lc = target.to_lowercase();
    let relevance =
        key_relevance(key, &RelevanceMap::default()).unwrap_or(FrequencyRelevance::General);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut push = |word: &str, source| {
        let w = word.to_lowercase();
        if w != target_lc && lex.contains(&w) && seen.insert(w.clone()) {
            out.push(CandidatePair {
                target: target_lc.clone(),
                distractor: w,
                key: key.clone(),
                source,
                relevance,
            });
        }
    };
    for w in observed.instantiating(target, key) {
        push(w, DistractorSource::AsrObserved);
    }
    let mut generated = BTreeSet::new();
    for pron in lex.lookup(target) {
        for edited in apply_key(pron, key) {
            generated.extend(lex.reverse_lookup(&edited));
        }
    }
    for w in &generated {
        push(w, DistractorSource::PhoneticallyGenerated);
    }
    out
}

/// Relevance of the clean phoneme, or of the inserted one for insertions.
pub fn key_relevance(key: &ConfusionKey, map: &RelevanceMap) -> Result<FrequencyRelevance> {
    let p = key
        .clean
        .as_ref()
        .or(key.hl.as_ref())
        .ok_or_else(|| Error::validation("confusion key without phonemes"))?;
    map.relevance_of(p)
}

pub fn annotate_relevance(pairs: &mut [CandidatePair], map: &RelevanceMap) -> Result<()> {
    for p in pairs {
        p.relevance = key_relevance(&p.key, map)?;
    }
    Ok(())
}

/// Item counts per relevance band, every band present.
pub fn relevance_distribution(pairs: &[CandidatePair]) -> BTreeMap<FrequencyRelevance, usize> {
    let mut out: BTreeMap<_, _> = FrequencyRelevance::ALL.iter().map(|r| (*r, 0)).collect();
    for p in pairs {
        *out.entry(p.relevance).or_default() += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curation {
    pub pairs: Vec<CandidatePair>,
    /// Apportioned targets per error type.
    pub targets: BTreeMap<EditKind, usize>,
    pub warnings: Vec<String>,
}

impl Curation {
    pub fn count(&self, kind: EditKind) -> usize {
        self.pairs.iter().filter(|p| p.key.kind == kind).count()
    }
}

/// Selects the battery.
///
/// Phase 1 takes up to `phase1_quota` items from each of the `phase1_top_k` most
/// frequent confusion types. Phase 2 fills each error type up to its apportioned
/// target by cycling over that type's confusion keys in frequency order.
pub fn curate(
    records: &[ConfusionRecord],
    lex: &Lexicon,
    cfg: &CurationConfig,
) -> Result<Curation> {
    cfg.validate()?;
    if records.is_empty() {
        return Err(Error::validation("confusion dataset is empty"));
    }

    // key -> total count, and key -> word -> count
    let mut key_counts: BTreeMap<ConfusionKey, u64> = BTreeMap::new();
    let mut key_words: BTreeMap<ConfusionKey, BTreeMap<String, u64>> = BTreeMap::new();
    for r in records {
        for k in r.keys() {
            *key_counts.entry(k.clone()).or_default() += 1;
            *key_words
                .entry(k)
                .or_default()
                .entry(r.word.to_lowercase())
                .or_default() += 1;
        }
    }
    let mut ranked: Vec<(ConfusionKey, u64)> = key_counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    let observed = ObservedOutputs::from_records(records);
    let candidates_for = |key: &ConfusionKey| -> Vec<CandidatePair> {
        let mut words: Vec<(&String, &u64)> = key_words[key].iter().collect();
        words.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        let mut all: Vec<(usize, CandidatePair)> = Vec::new();
        for (rank, (w, _)) in words.iter().enumerate() {
            if !lex.contains(w) {
                continue;
            }
            for c in generate_distractors(w, key, lex, &observed) {
                if filter_candidate(&c, lex, cfg).is_ok() {
                    all.push((rank, c));
                }
            }
        }
        // stable: source, then word frequency rank, then generation order
        all.sort_by(|a, b| a.1.source.cmp(&b.1.source).then(a.0.cmp(&b.0)));
        all.into_iter().map(|(_, c)| c).collect()
    };

    let targets = cfg.type_targets();
    let target_of = |k: EditKind| match k {
        EditKind::Substitution => targets[0],
        EditKind::Deletion => targets[1],
        EditKind::Insertion => targets[2],
        EditKind::Match => 0,
    };

    let mut pool: BTreeMap<ConfusionKey, std::vec::IntoIter<CandidatePair>> = BTreeMap::new();
    let mut taken: HashSet<(String, String)> = HashSet::new();
    let mut counts: BTreeMap<EditKind, usize> = BTreeMap::new();
    let mut pairs = Vec::new();

    let next_from = |key: &ConfusionKey,
                     pool: &mut BTreeMap<ConfusionKey, std::vec::IntoIter<CandidatePair>>,
                     taken: &mut HashSet<(String, String)>|
     -> Option<CandidatePair> {
        let it = pool
            .entry(key.clone())
            .or_insert_with(|| candidates_for(key).into_iter());
        it.find(|c| !taken.contains(&(c.target.clone(), c.distractor.clone())))
    };

    let quota = cfg.phase1_quota();
    for (key, _) in ranked.iter().take(cfg.phase1_top_k) {
        for _ in 0..quota {
            if counts.get(&key.kind).copied().unwrap_or(0) >= target_of(key.kind) {
                break;
            }
            let Some(c) = next_from(key, &mut pool, &mut taken) else {
                break;
            };
            taken.insert((c.target.clone(), c.distractor.clone()));
            *counts.entry(key.kind).or_default() += 1;
            pairs.push(c);
        }
    }

    for kind in ERROR_KINDS {
        let mut live: Vec<&ConfusionKey> = ranked
            .iter()
            .filter(|(k, _)| k.kind == kind)
            .map(|(k, _)| k)
            .collect();
        while counts.get(&kind).copied().unwrap_or(0) < target_of(kind) && !live.is_empty() {
            let mut still = Vec::with_capacity(live.len());
            for key in live {
                if counts.get(&kind).copied().unwrap_or(0) >= target_of(kind) {
                    break;
                }
                if let Some(c) = next_from(key, &mut pool, &mut taken) {
                    taken.insert((c.target.clone(), c.distractor.clone()));
                    *counts.entry(kind).or_default() += 1;
                    pairs.push(c);
                    still.push(key);
                }
            }
            live = still;
        }
    }

    let mut warnings = Vec::new();
    let shortfall: Vec<String> = ERROR_KINDS
        .iter()
        .filter_map(|&k| {
            let got = counts.get(&k).copied().unwrap_or(0);
            (got < target_of(k)).then(|| format!("{k} {got}/{}", target_of(k)))
        })
        .collect();
    if !shortfall.is_empty() {
        warnings.push(format!(
            "insufficient candidates: {} items of {}; shortfall by type: {}",
            pairs.len(),
            cfg.total_items,
            shortfall.join(", ")
        ));
    }
    Ok(Curation {
        pairs,
        targets: ERROR_KINDS.iter().map(|&k| (k, target_of(k))).collect(),
        warnings,
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "PascalCase")]
struct BatteryRow {
    original_word: String,
    distractor: String,
    error_type: String,
    clean_phoneme_involved: String,
    #[serde(rename = "HLPhonemeInvolved")]
    hl_phoneme_involved: String,
    frequency_relevance: String,
    distractor_source: String,
}

pub fn write_battery(path: &Path, pairs: &[CandidatePair]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in pairs {
        w.serialize(BatteryRow {
            original_word: p.target.clone(),
            distractor: p.distractor.clone(),
            error_type: p.key.kind.name().to_string(),
            clean_phoneme_involved: symbol_str(&p.key.clean).to_string(),
            hl_phoneme_involved: symbol_str(&p.key.hl).to_string(),
            frequency_relevance: p.relevance.name().to_string(),
            distractor_source: p.source.name().to_string(),
        })?;
    }
    w.flush()
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(())
}

pub fn read_battery(path: &Path) -> Result<Vec<CandidatePair>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<BatteryRow>().enumerate() {
        let row = row?;
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            message,
        };
        let sym = |s: &str| -> Result<Option<Phoneme>> {
            if s.is_empty() {
                Ok(None)
            } else {
                Phoneme::parse(s).map(Some).map_err(|e| err(e.to_string()))
            }
        };
        let kind = EditKind::from_name(&row.error_type)
            .filter(|k| *k != EditKind::Match)
            .ok_or_else(|| err(format!("bad error type {:?}", row.error_type)))?;
        out.push(CandidatePair {
            target: row.original_word,
            distractor: row.distractor,
            key: ConfusionKey {
                kind,
                clean: sym(&row.clean_phoneme_involved)?,
                hl: sym(&row.hl_phoneme_involved)?,
            },
            source: DistractorSource::from_name(&row.distractor_source)
                .ok_or_else(|| err(format!("bad source {:?}", row.distractor_source)))?,
            relevance: FrequencyRelevance::from_name(&row.frequency_relevance)
                .ok_or_else(|| err(format!("bad relevance {:?}", row.frequency_relevance)))?,
        });
    }
    Ok(out)
}
