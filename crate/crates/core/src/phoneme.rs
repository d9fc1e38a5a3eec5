//! ARPAbet phoneme tokens and sequences.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const VOWELS: [&str; 15] = [
    "AA", "AE", "AH", "AO", "AW", "AY", "EH", "ER", "EY", "IH", "IY", "OW", "OY", "UH", "UW",
];

pub const CONSONANTS: [&str; 24] = [
    "B", "CH", "D", "DH", "F", "G", "HH", "JH", "K", "L", "M", "N", "NG", "P", "R", "S", "SH", "T",
    "TH", "V", "W", "Y", "Z", "ZH",
];

/// One phoneme symbol, e.g. `S` or `IY1`. Vowels may carry a stress digit 0-2.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Phoneme(String);

impl Phoneme {
    /// Parses a symbol against the ARPAbet inventory, case-insensitively.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_uppercase();
        let (base, stress) = split_stress(&s);
        let vowel = VOWELS.contains(&base);
        if !vowel && !CONSONANTS.contains(&base) {
            return Err(Error::validation(format!("unknown phoneme {s:?}")));
        }
        match stress {
            Some(d) if !vowel || d > 2 => {
                Err(Error::validation(format!("invalid stress mark on {s:?}")))
            }
            _ => Ok(Phoneme(s)),
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Symbol without its stress digit.
    pub fn base(&self) -> &str {
        split_stress(&self.0).0
    }

    pub fn stress(&self) -> Option<u8> {
        split_stress(&self.0).1
    }

    pub fn is_vowel(&self) -> bool {
        VOWELS.contains(&self.base())
    }

    pub fn stripped(&self) -> Phoneme {
        Phoneme(self.base().to_string())
    }

    /// Same base symbol with `stress` applied (vowels only).
    pub fn with_stress(base: &str, stress: Option<u8>) -> Result<Self> {
        match stress {
            Some(d) => Phoneme::parse(&format!("{base}{d}")),
            None => Phoneme::parse(base),
        }
    }
}

fn split_stress(s: &str) -> (&str, Option<u8>) {
    match s.as_bytes().last() {
        Some(b) if b.is_ascii_digit() => (&s[..s.len() - 1], Some(b - b'0')),
        _ => (s, None),
    }
}

impl fmt::Display for Phoneme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Phoneme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Phoneme::parse(s)
    }
}

impl TryFrom<String> for Phoneme {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Phoneme::parse(&s)
    }
}

impl From<Phoneme> for String {
    fn from(p: Phoneme) -> String {
        p.0
    }
}

/// Ordered phoneme tokens of one pronunciation.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PhonemeSequence(Vec<Phoneme>);

impl PhonemeSequence {
    pub fn new(tokens: Vec<Phoneme>) -> Self {
        Self(tokens)
    }

    pub fn tokens(&self) -> &[Phoneme] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Stress-stripped copy used as the reverse-lookup key.
    pub fn canonical(&self) -> PhonemeSequence {
        PhonemeSequence(self.0.iter().map(Phoneme::stripped).collect())
    }

    /// Number of vowel nuclei.
    pub fn syllable_count(&self) -> usize {
        self.0.iter().filter(|p| p.is_vowel()).count()
    }
}

/// Number of syllables (vowel nuclei) in a pronunciation.
pub fn syllable_count(phonemes: &PhonemeSequence) -> usize {
    phonemes.syllable_count()
}

impl FromStr for PhonemeSequence {
    type Err = Error;

    /// Parses whitespace-separated symbols; the empty string is the empty sequence.
    fn from_str(s: &str) -> Result<Self> {
        s.split_whitespace()
            .map(Phoneme::parse)
            .collect::<Result<Vec<_>>>()
            .map(PhonemeSequence)
    }
}

impl fmt::Display for PhonemeSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(p.as_str())?;
        }
        Ok(())
    }
}

impl From<Vec<Phoneme>> for PhonemeSequence {
    fn from(v: Vec<Phoneme>) -> Self {
        Self(v)
    }
}

impl<'a> IntoIterator for &'a PhonemeSequence {
    type Item = &'a Phoneme;
    type IntoIter = std::slice::Iter<'a, Phoneme>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Shorthand for literals in tests and fixtures. Panics on invalid input.
pub fn seq(s: &str) -> PhonemeSequence {
    s.parse().expect("valid phoneme sequence literal")
}

/// Shorthand for a single phoneme literal. Panics on invalid input.
pub fn ph(s: &str) -> Phoneme {
    Phoneme::parse(s).expect("valid phoneme literal")
}
