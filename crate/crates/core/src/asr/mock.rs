//! Seeded phoneme confusion channel standing in for a neural recognizer.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::confusion::{ArticulationClass, ArticulationMap};
use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::phoneme::{Phoneme, PhonemeSequence, CONSONANTS, VOWELS};
use crate::seed;

/// Substitution targets per source phoneme, as relative weights.
pub type ConfusionBias = BTreeMap<String, Vec<(String, f64)>>;

/// Most frequent clean-to-HL substitutions observed under moderate sloping loss.
const OBSERVED_SUBSTITUTIONS: [(&str, &str, u32); 20] = [
    ("S", "F", 251),
    ("IY1", "EY1", 212),
    ("S", "T", 201),
    ("IH1", "EH1", 200),
    ("W", "B", 186),
    ("T", "D", 172),
    ("AE1", "EH1", 163),
    ("N", "L", 155),
    ("IY1", "IH1", 147),
    ("T", "K", 142),
    ("R", "B", 140),
    ("IH1", "IY1", 136),
    ("M", "L", 134),
    ("S", "K", 134),
    ("N", "T", 131),
    ("R", "T", 129),
    ("OW1", "AA1", 123),
    ("R", "K", 122),
    ("AA1", "AH1", 121),
    ("AO1", "AA1", 114),
];

/// Source phoneme -> substitution weights, normalized per source.
pub fn default_confusion_bias() -> ConfusionBias {
    let mut bias: ConfusionBias = BTreeMap::new();
    for (src, dst, n) in OBSERVED_SUBSTITUTIONS {
        bias.entry(src.to_string())
            .or_default()
            .push((dst.to_string(), n as f64));
    }
    for targets in bias.values_mut() {
        let total: f64 = targets.iter().map(|t| t.1).sum();
        targets.iter_mut().for_each(|t| t.1 /= total);
    }
    bias
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockChannelParams {
    pub p_sub: f64,
    pub p_del: f64,
    pub p_ins: f64,
    /// Substitution targets; sources not listed substitute uniformly within
    /// their articulation class.
    #[serde(default = "default_confusion_bias")]
    pub confusion_bias: ConfusionBias,
    #[serde(default)]
    pub seed: u64,
}

impl MockChannelParams {
    pub fn new(p_sub: f64, p_del: f64, p_ins: f64) -> Self {
        Self {
            p_sub,
            p_del,
            p_ins,
            confusion_bias: default_confusion_bias(),
            seed: 0,
        }
    }

    pub fn identity() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    /// Clean speech: a few residual recognition errors.
    pub fn clean() -> Self {
        Self::new(0.02, 0.01, 0.005)
    }

    /// Noise without hearing loss.
    pub fn normal_hearing() -> Self {
        Self::new(0.05, 0.03, 0.012)
    }

    /// Moderate sloping loss: 30 % of phonemes disturbed, split 52.7 / 34.9 / 12.4
    /// across substitution, deletion and insertion events.
    pub fn hl_calibrated() -> Self {
        let rate = 0.30;
        Self::new(rate * 0.527, rate * 0.349, rate * 0.124)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.p_sub) || !prob(self.p_del) || self.p_sub + self.p_del > 1.0 {
            return Err(Error::validation(
                "p_sub and p_del must be probabilities with p_sub + p_del <= 1",
            ));
        }
        if !(0.0..1.0).contains(&self.p_ins) {
            return Err(Error::validation("p_ins must lie in [0, 1)"));
        }
        for (src, targets) in &self.confusion_bias {
            Phoneme::parse(src)?;
            for (dst, w) in targets {
                Phoneme::parse(dst)?;
                if !(*w >= 0.0) || !w.is_finite() {
                    return Err(Error::validation(format!(
                        "negative confusion weight {src}->{dst}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Channel output plus the events that produced it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChannelOutcome {
    pub phonemes: PhonemeSequence,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
}

/// Runs one pass of the i.i.d. per-phoneme channel.
pub fn apply_channel<R: Rng>(
    input: &PhonemeSequence,
    params: &MockChannelParams,
    classes: &ArticulationMap,
    rng: &mut R,
) -> ChannelOutcome {
    let mut out = ChannelOutcome::default();
    let mut tokens = Vec::with_capacity(input.len() + 2);
    for p in input {
        let u: f64 = rng.gen();
        if u < params.p_del {
            out.deletions += 1;
        } else if u < params.p_del + params.p_sub {
            tokens.push(substitute(p, params, classes, rng));
            out.substitutions += 1;
        } else {
            tokens.push(p.clone());
        }
        if rng.gen::<f64>() < params.p_ins {
            tokens.push(random_phoneme(rng));
            out.insertions += 1;
        }
    }
    out.phonemes = PhonemeSequence::new(tokens);
    out
}

fn substitute<R: Rng>(
    p: &Phoneme,
    params: &MockChannelParams,
    classes: &ArticulationMap,
    rng: &mut R,
) -> Phoneme {
    if let Some(targets) = params.confusion_bias.get(p.as_str()) {
        let total: f64 = targets.iter().map(|t| t.1).sum();
        if total > 0.0 {
            let mut x = rng.gen::<f64>() * total;
            let pick = targets
                .iter()
                .find(|(_, w)| {
                    let hit = x < *w;
                    x -= w;
                    hit
                })
                .or(targets.last());
            if let Some(q) = pick.and_then(|(dst, _)| Phoneme::parse(dst).ok()) {
                return q;
            }
        }
    }
    let class = classes.class_of(p).unwrap_or(ArticulationClass::Vowel);
    let mut pool: Vec<&str> = classes
        .members(class)
        .into_iter()
        .filter(|s| *s != p.base())
        .collect();
    if pool.is_empty() {
        pool = CONSONANTS
            .iter()
            .copied()
            .filter(|s| *s != p.base())
            .collect();
    }
    let base = pool[rng.gen_range(0..pool.len())];
    let stress = if VOWELS.contains(&base) {
        p.stress().or(Some(0))
    } else {
        None
    };
    Phoneme::with_stress(base, stress).expect("inventory symbol")
}

fn random_phoneme<R: Rng>(rng: &mut R) -> Phoneme {
    let n = CONSONANTS.len() + VOWELS.len();
    let k = rng.gen_range(0..n);
    if k < CONSONANTS.len() {
        Phoneme::parse(CONSONANTS[k]).expect("inventory symbol")
    } else {
        Phoneme::with_stress(VOWELS[k - CONSONANTS.len()], Some(0)).expect("inventory symbol")
    }
}

/// Passes `word_phonemes` through the channel seeded by `params.seed` and maps the
/// result back to the nearest vocabulary word. Returns the empty string when every
/// phoneme was deleted.
pub fn mock_transcribe(
    word_phonemes: &PhonemeSequence,
    params: &MockChannelParams,
    lex: &Lexicon,
) -> Result<String> {
    params.validate()?;
    let mut rng = seed::rng(params.seed);
    let outcome = apply_channel(word_phonemes, params, &ArticulationMap::default(), &mut rng);
    if outcome.phonemes.is_empty() {
        return Ok(String::new());
    }
    Ok(lex
        .nearest_word(&outcome.phonemes)
        .unwrap_or_default()
        .to_string())
}
