//! Place-of-articulation classes and frequency-relevance bands per phoneme.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::matrix::ConfusionMatrix;
use crate::error::{Error, Result};
use crate::phoneme::{Phoneme, CONSONANTS, VOWELS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ArticulationClass {
    #[serde(rename = "Alveolar/Palatal")]
    AlveolarPalatal,
    Labiodental,
    Bilabial,
    #[serde(rename = "Velar/Palatal")]
    VelarPalatal,
    Dental,
    Glottal,
    Vowel,
}

impl ArticulationClass {
    pub fn name(self) -> &'static str {
        match self {
            ArticulationClass::AlveolarPalatal => "Alveolar/Palatal",
            ArticulationClass::Labiodental => "Labiodental",
            ArticulationClass::Bilabial => "Bilabial",
            ArticulationClass::VelarPalatal => "Velar/Palatal",
            ArticulationClass::Dental => "Dental",
            ArticulationClass::Glottal => "Glottal",
            ArticulationClass::Vowel => "Vowel",
        }
    }

    pub const ALL: [ArticulationClass; 7] = [
        ArticulationClass::AlveolarPalatal,
        ArticulationClass::Labiodental,
        ArticulationClass::Bilabial,
        ArticulationClass::VelarPalatal,
        ArticulationClass::Dental,
        ArticulationClass::Glottal,
        ArticulationClass::Vowel,
    ];
}

impl fmt::Display for ArticulationClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Phoneme (base symbol) to articulation class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArticulationMap {
    classes: HashMap<String, ArticulationClass>,
}

impl Default for ArticulationMap {
    fn default() -> Self {
        use ArticulationClass::*;
        let mut classes = HashMap::new();
        let groups: [(&[&str], ArticulationClass); 6] = [
            (&["P", "B", "M", "W"], Bilabial),
            (&["F", "V"], Labiodental),
            (&["TH", "DH"], Dental),
            (
                &[
                    "T", "D", "S", "Z", "N", "L", "R", "SH", "ZH", "CH", "JH", "Y",
                ],
                AlveolarPalatal,
            ),
            (&["K", "G", "NG"], VelarPalatal),
            (&["HH"], Glottal),
        ];
        for (symbols, class) in groups {
            for s in symbols {
                classes.insert(s.to_string(), class);
            }
        }
        for v in VOWELS {
            classes.insert(v.to_string(), Vowel);
        }
        debug_assert!(CONSONANTS.iter().all(|c| classes.contains_key(*c)));
        Self { classes }
    }
}

impl ArticulationMap {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, ArticulationClass)>) -> Self {
        Self {
            classes: pairs.into_iter().collect(),
        }
    }

    pub fn class_of(&self, p: &Phoneme) -> Result<ArticulationClass> {
        self.classes
            .get(p.as_str())
            .or_else(|| self.classes.get(p.base()))
            .copied()
            .ok_or_else(|| Error::Config(format!("phoneme {p} has no articulation class")))
    }

    /// Members of `class`, as base symbols in sorted order.
    pub fn members(&self, class: ArticulationClass) -> Vec<&str> {
        let mut v: Vec<&str> = self
            .classes
            .iter()
            .filter(|(_, &c)| c == class)
            .map(|(s, _)| s.as_str())
            .collect();
        v.sort_unstable();
        v
    }
}

/// Re-bins the substitution cells of `matrix` by articulation class.
pub fn articulation_projection(
    matrix: &ConfusionMatrix,
    map: &ArticulationMap,
) -> Result<BTreeMap<(ArticulationClass, ArticulationClass), u64>> {
    let mut out = BTreeMap::new();
    for (o, t, count) in matrix.cells() {
        if let (Some(o), Some(t)) = (o, t) {
            if o != t {
                let key = (map.class_of(o)?, map.class_of(t)?);
                *out.entry(key).or_default() += count;
            }
        }
    }
    Ok(out)
}

/// Projected cells sorted by count descending, ties by class order.
pub fn ranked_projection(
    projection: &BTreeMap<(ArticulationClass, ArticulationClass), u64>,
) -> Vec<(ArticulationClass, ArticulationClass, u64)> {
    let mut v: Vec<_> = projection.iter().map(|(&(a, b), &c)| (a, b, c)).collect();
    v.sort_by(|x, y| y.2.cmp(&x.2));
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FrequencyRelevance {
    High,
    #[serde(rename = "Mid-High")]
    MidHigh,
    Mid,
    General,
}

impl FrequencyRelevance {
    pub fn name(self) -> &'static str {
        match self {
            FrequencyRelevance::High => "High",
            FrequencyRelevance::MidHigh => "Mid-High",
            FrequencyRelevance::Mid => "Mid",
            FrequencyRelevance::General => "General",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "High" => Some(FrequencyRelevance::High),
            "Mid-High" => Some(FrequencyRelevance::MidHigh),
            "Mid" => Some(FrequencyRelevance::Mid),
            "General" => Some(FrequencyRelevance::General),
            _ => None,
        }
    }

    pub const ALL: [FrequencyRelevance; 4] = [
        FrequencyRelevance::High,
        FrequencyRelevance::MidHigh,
        FrequencyRelevance::Mid,
        FrequencyRelevance::General,
    ];
}

impl fmt::Display for FrequencyRelevance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Phoneme to frequency-relevance band. Loadable from JSON
/// (`{"S": "High", "T": "Mid-High", ...}`) so the bands can be retuned; keys are
/// exact symbols or stress-free bases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelevanceMap {
    bands: BTreeMap<String, FrequencyRelevance>,
}

impl Default for RelevanceMap {
    fn default() -> Self {
        use FrequencyRelevance::*;
        let mut bands = BTreeMap::new();
        for s in ["S", "Z", "SH", "ZH", "F", "TH", "CH", "JH"] {
            bands.insert(s.to_string(), High);
        }
        for s in ["T", "D", "K", "G", "V", "DH"] {
            bands.insert(s.to_string(), MidHigh);
        }
        for s in ["IY", "IH", "EY", "EH", "AE"] {
            bands.insert(s.to_string(), Mid);
        }
        for s in CONSONANTS.iter().chain(VOWELS.iter()) {
            bands.entry(s.to_string()).or_insert(General);
        }
        Self { bands }
    }
}

impl RelevanceMap {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading relevance map {}", path.display()), e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn relevance_of(&self, p: &Phoneme) -> Result<FrequencyRelevance> {
        self.bands
            .get(p.as_str())
            .or_else(|| self.bands.get(p.base()))
            .copied()
            .ok_or_else(|| Error::Config(format!("phoneme {p} has no frequency relevance")))
    }
}

/// Relevance under the shipped default table.
pub fn frequency_relevance_of(p: &Phoneme) -> FrequencyRelevance {
    RelevanceMap::default()
        .relevance_of(p)
        .expect("default relevance table covers the inventory")
}
