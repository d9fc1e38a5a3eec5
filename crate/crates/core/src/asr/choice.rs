use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::edit::levenshtein;
use crate::error::{Error, Result};
use crate::lexicon::{clean_token, Lexicon};
use crate::phoneme::PhonemeSequence;
use crate::seed;

/// How a recognizer's output is turned into one of the two response options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ChoiceMode {
    /// Closer option by phoneme edit distance; ties decided by a fair seeded coin.
    Deterministic,
    /// Softmax over negated distances at the given temperature.
    Probabilistic { temperature: f64 },
}

impl Default for ChoiceMode {
    fn default() -> Self {
        ChoiceMode::Deterministic
    }
}

/// Pronunciation of raw recognizer output after lexical normalization. Empty output
/// maps to the empty sequence.
pub fn output_pronunciation(raw: &str, lex: &Lexicon) -> Result<PhonemeSequence> {
    if clean_token(raw).is_empty() {
        return Ok(PhonemeSequence::default());
    }
    let word = lex.lexical_normalize(raw)?;
    Ok(lex.require(&word)?.clone())
}

/// Picks `target` or `distractor` for recognizer output `asr_output`.
///
/// The decision depends only on the pair of words, not on which one is labelled
/// the target, so swapping the labels swaps the outcome.
pub fn forced_choice(
    asr_output: &str,
    target: &str,
    distractor: &str,
    lex: &Lexicon,
    mode: ChoiceMode,
    seed: u64,
) -> Result<String> {
    if target.eq_ignore_ascii_case(distractor) {
        return Err(Error::validation("target and distractor must differ"));
    }
    let heard = output_pronunciation(asr_output, lex)?;
    let (first, second) = if target.to_lowercase() <= distractor.to_lowercase() {
        (target, distractor)
    } else {
        (distractor, target)
    };
    let d_first = levenshtein(lex.require(first)?.tokens(), heard.tokens()) as f64;
    let d_second = levenshtein(lex.require(second)?.tokens(), heard.tokens()) as f64;

    let mut rng = seed::rng(seed);
    let pick_first = match mode {
        ChoiceMode::Deterministic => {
            if d_first != d_second {
                d_first < d_second
            } else {
                rng.gen_bool(0.5)
            }
        }
        ChoiceMode::Probabilistic { temperature } => {
            if !(temperature > 0.0) {
                return Err(Error::validation("softmax temperature must be positive"));
            }
            let p_first = 1.0 / (1.0 + ((d_first - d_second) / temperature).exp());
            rng.gen::<f64>() < p_first
        }
    };
    Ok(if pick_first { first } else { second }.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn lex() -> Lexicon {
        Lexicon::parse(
            "SAT  S AE1 T\nFAT  F AE1 T\nCAT  K AE1 T\nFEW  F Y UW1\nFEEL  F IY1 L\n",
            Path::new("t"),
        )
        .unwrap()
    }

    #[test]
    fn exact_output_wins() {
        let l = lex();
        let got = forced_choice("sat", "sat", "fat", &l, ChoiceMode::Deterministic, 1).unwrap();
        assert_eq!(got, "sat");
        let got = forced_choice("fat", "sat", "fat", &l, ChoiceMode::Deterministic, 1).unwrap();
        assert_eq!(got, "fat");
    }

    #[test]
    fn equidistant_is_a_fair_coin() {
        let l = lex();
        let n = 10_000;
        let sat = (0..n)
            .filter(|&s| {
                forced_choice("cat", "sat", "fat", &l, ChoiceMode::Deterministic, s).unwrap()
                    == "sat"
            })
            .count();
        let share = sat as f64 / n as f64;
        assert!((share - 0.5).abs() <= 0.02, "{share}");
    }

    #[test]
    fn swapping_labels_swaps_choice() {
        let l = lex();
        for s in 0..200 {
            for mode in [
                ChoiceMode::Deterministic,
                ChoiceMode::Probabilistic { temperature: 1.0 },
            ] {
                let a = forced_choice("cat", "sat", "fat", &l, mode, s).unwrap();
                let b = forced_choice("cat", "fat", "sat", &l, mode, s).unwrap();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn probabilistic_matches_softmax() {
        let l = lex();
        // "few" vs "feel" heard as "few": distances 0 and 2
        let n = 20_000;
        let hits = (0..n)
            .filter(|&s| {
                forced_choice(
                    "few",
                    "few",
                    "feel",
                    &l,
                    ChoiceMode::Probabilistic { temperature: 1.0 },
                    s,
                )
                .unwrap()
                    == "few"
            })
            .count();
        let want = 1.0 / (1.0 + (-2.0f64).exp());
        assert!((hits as f64 / n as f64 - want).abs() < 0.01);
    }

    #[test]
    fn errors() {
        let l = lex();
        assert!(matches!(
            forced_choice("sat", "sat", "zzz", &l, ChoiceMode::Deterministic, 0),
            Err(Error::Lookup(_))
        ));
        assert!(forced_choice("sat", "sat", "SAT", &l, ChoiceMode::Deterministic, 0).is_err());
        // empty output still yields one of the options
        let got = forced_choice("", "few", "cat", &l, ChoiceMode::Deterministic, 0).unwrap();
        assert!(got == "few" || got == "cat");
    }
}
