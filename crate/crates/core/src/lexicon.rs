//! CMUdict-style pronouncing lexicon with reverse lookup and lexical normalization.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use crate::edit::{levenshtein, word_distance};
use crate::error::{Error, Result};
use crate::phoneme::{Phoneme, PhonemeSequence};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Lexicon {
    entries: BTreeMap<String, Vec<PhonemeSequence>>,
    reverse: HashMap<PhonemeSequence, BTreeSet<String>>,
    /// Vocabulary ordered by (length, word) for the normalization tie-break.
    by_length: Vec<(String, Vec<char>)>,
    /// Stress-free pronunciations bucketed by phoneme count.
    by_phones: BTreeMap<usize, Vec<(String, PhonemeSequence)>>,
}

impl Lexicon {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading lexicon {}", path.display()), e))?;
        Self::parse(&text, path)
    }

    /// Parses CMUdict text: `WORD  PH1 PH2 ...`, `;;;` comment lines, `WORD(2)` alternates.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut entries: BTreeMap<String, Vec<PhonemeSequence>> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() || line.starts_with(";;;") {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: PathBuf::from(origin),
                line: idx + 1,
                message,
            };
            let mut fields = line.split_whitespace();
            let head = fields.next().unwrap_or_default();
            let word = strip_variant(head)
                .ok_or_else(|| parse_err(format!("malformed headword {head:?}")))?
                .to_lowercase();
            let tokens = fields
                .map(|t| Phoneme::parse(t).map_err(|e| parse_err(e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            if tokens.is_empty() {
                return Err(parse_err(format!("no pronunciation for {word:?}")));
            }
            let prons = entries.entry(word).or_default();
            let seq = PhonemeSequence::new(tokens);
            if !prons.contains(&seq) {
                prons.push(seq);
            }
        }
        Ok(Self::from_entries(entries))
    }

    pub fn from_entries(entries: BTreeMap<String, Vec<PhonemeSequence>>) -> Self {
        let mut reverse: HashMap<PhonemeSequence, BTreeSet<String>> = HashMap::new();
        for (word, prons) in &entries {
            for p in prons {
                reverse
                    .entry(p.canonical())
                    .or_default()
                    .insert(word.clone());
            }
        }
        let mut by_length: Vec<(String, Vec<char>)> = entries
            .keys()
            .map(|w| (w.clone(), w.chars().collect()))
            .collect();
        by_length.sort_by(|a, b| a.1.len().cmp(&b.1.len()).then_with(|| a.0.cmp(&b.0)));
        let mut by_phones: BTreeMap<usize, Vec<(String, PhonemeSequence)>> = BTreeMap::new();
        for (word, prons) in &entries {
            for p in prons {
                by_phones
                    .entry(p.len())
                    .or_default()
                    .push((word.clone(), p.canonical()));
            }
        }
        Lexicon {
            entries,
            reverse,
            by_length,
            by_phones,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(&word.to_lowercase())
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &[PhonemeSequence])> {
        self.entries.iter().map(|(w, p)| (w.as_str(), p.as_slice()))
    }

    /// All pronunciations of `word` (case-insensitive); empty when absent.
    pub fn lookup(&self, word: &str) -> &[PhonemeSequence] {
        self.entries
            .get(&word.to_lowercase())
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// First listed pronunciation.
    pub fn primary(&self, word: &str) -> Option<&PhonemeSequence> {
        self.lookup(word).first()
    }

    pub fn require(&self, word: &str) -> Result<&PhonemeSequence> {
        self.primary(word)
            .ok_or_else(|| Error::Lookup(word.to_string()))
    }

    /// Words having a pronunciation equal to `phonemes` once stress is ignored.
    pub fn reverse_lookup(&self, phonemes: &PhonemeSequence) -> BTreeSet<String> {
        self.reverse
            .get(&phonemes.canonical())
            .cloned()
            .unwrap_or_default()
    }

    /// Maps a phoneme string to a word: an exact (stress-free) reverse hit if there is
    /// one, otherwise the word whose pronunciation is closest in phoneme edit distance.
    /// Ties go to the shorter word, then lexicographic order.
    pub fn nearest_word(&self, phonemes: &PhonemeSequence) -> Option<&str> {
        let key = phonemes.canonical();
        if let Some(words) = self.reverse.get(&key) {
            return words
                .iter()
                .min_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)))
                .map(String::as_str);
        }
        let n = key.len();
        let longest = self.by_phones.keys().next_back().copied().unwrap_or(0);
        let mut best: Option<(usize, &str)> = None;
        // edit distance is at least the length gap, so widen the gap until it exceeds the best
        for gap in 0.. {
            if best.is_some_and(|(d, _)| gap > d) || (gap > n && n + gap > longest) {
                break;
            }
            let lengths = [n.checked_sub(gap), (gap > 0).then_some(n + gap)];
            for len in lengths.into_iter().flatten() {
                for (word, canon) in self.by_phones.get(&len).into_iter().flatten() {
                    let d = levenshtein(canon.tokens(), key.tokens());
                    let wins = match best {
                        None => true,
                        Some((bd, bw)) => (d, word.len(), word.as_str()) < (bd, bw.len(), bw),
                    };
                    if wins {
                        best = Some((d, word));
                    }
                }
            }
        }
        best.map(|(_, w)| w)
    }

    /// Snaps raw ASR text to the closest vocabulary word by character edit distance.
    ///
    /// Only the first whitespace token is used. Ties are broken by shorter word, then
    /// lexicographic order.
    pub fn lexical_normalize(&self, raw: &str) -> Result<String> {
        let token = clean_token(raw);
        if token.is_empty() {
            return Err(Error::validation(format!(
                "nothing to normalize in {raw:?}"
            )));
        }
        if self.entries.contains_key(&token) {
            return Ok(token);
        }
        let chars: Vec<char> = token.chars().collect();
        let mut best: Option<(usize, &str)> = None;
        for (word, wchars) in &self.by_length {
            if let Some((d, _)) = best {
                if wchars.len().abs_diff(chars.len()) >= d {
                    if wchars.len() > chars.len() {
                        break;
                    }
                    continue;
                }
            }
            let d = levenshtein(wchars, &chars);
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, word));
            }
        }
        best.map(|(_, w)| w.to_string())
            .ok_or_else(|| Error::validation("lexicon is empty"))
    }
}

/// Lowercases, takes the first whitespace token and drops everything except
/// letters, digits and apostrophes.
pub fn clean_token(raw: &str) -> String {
    raw.split_whitespace()
        .next()
        .unwrap_or("")
        .chars()
        .filter(|c| c.is_alphanumeric() || *c == '\'')
        .flat_map(char::to_lowercase)
        .collect()
}

/// `WORD(2)` -> `WORD`; `None` for unbalanced variant markers.
fn strip_variant(head: &str) -> Option<&str> {
    match head.find('(') {
        None => Some(head),
        Some(0) => None,
        Some(i) => {
            let inner = head[i + 1..].strip_suffix(')')?;
            if inner.is_empty() || !inner.chars().all(|c| c.is_ascii_digit()) {
                return None;
            }
            Some(&head[..i])
        }
    }
}

/// Brute-force character distance, exported for callers that want the value alongside
/// the normalized word.
pub fn normalization_distance(raw: &str, word: &str) -> usize {
    word_distance(&clean_token(raw), word)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phoneme::seq;

    const FIXTURE: &str = ";;; tiny fixture\n\
CAT  K AE1 T\n\
CART  K AA1 R T\n\
READ  R EH1 D\n\
READ(2)  R IY1 D\n\
TWO  T UW1\n\
TOO  T UW1\n\
TO  T UW1\n\
TO(2)  T AH0\n\
MUSICAL  M Y UW1 Z IH0 K AH0 L\n";

    fn lex() -> Lexicon {
        Lexicon::parse(FIXTURE, Path::new("fixture")).unwrap()
    }

    #[test]
    fn loads_format() {
        let l = lex();
        assert_eq!(l.lookup("cat"), &[seq("K AE1 T")]);
        assert_eq!(l.lookup("read").len(), 2);
        assert_eq!(l.lookup("CAT"), l.lookup("cat"));
        assert!(l.lookup("zzxq").is_empty());
        assert_eq!(l.len(), 7);
    }

    #[test]
    fn malformed_lines_report_line_number() {
        let err = Lexicon::parse("CAT  K AE1 T\nDOG\n", Path::new("f")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = Lexicon::parse(";;; c\nDOG  D QQ G\n", Path::new("f")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = Lexicon::parse("DOG(X)  D AO1 G\n", Path::new("f")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn reverse_lookup_cases() {
        let l = lex();
        let want: BTreeSet<String> = ["cat".to_string()].into();
        assert_eq!(l.reverse_lookup(&seq("K AE T")), want);
        let homophones: BTreeSet<String> =
            ["to", "too", "two"].iter().map(|s| s.to_string()).collect();
        assert_eq!(l.reverse_lookup(&seq("T UW1")), homophones);
        assert!(l.reverse_lookup(&seq("Z Z Z")).is_empty());
    }

    #[test]
    fn normalization() {
        let l = lex();
        assert_eq!(l.lexical_normalize("cat").unwrap(), "cat");
        assert_eq!(l.lexical_normalize("  Cat! ").unwrap(), "cat");
        assert_eq!(l.lexical_normalize("read it").unwrap(), "read");
        assert!(l.lexical_normalize("  ...  ").is_err());

        let small = Lexicon::parse("CAT  K AE1 T\nCART  K AA1 R T\n", Path::new("f")).unwrap();
        // both at distance 1; shorter wins
        assert_eq!(small.lexical_normalize("catt").unwrap(), "cat");
        let only_cat = Lexicon::parse("CAT  K AE1 T\n", Path::new("f")).unwrap();
        assert_eq!(only_cat.lexical_normalize("xyz").unwrap(), "cat");
    }

    #[test]
    fn nearest_word_prefers_exact_then_close() {
        let l = lex();
        assert_eq!(l.nearest_word(&seq("T UW1")), Some("to"));
        assert_eq!(l.nearest_word(&seq("K AE0 T")), Some("cat"));
        assert_eq!(l.nearest_word(&seq("K AE1 T S")), Some("cat"));
    }

    #[test]
    fn idempotent_load() {
        assert_eq!(lex(), lex());
    }
}
