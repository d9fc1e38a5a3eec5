//! Synthetic word recordings for tests and demos.
//!
//! Each phoneme becomes a short tone complex whose frequencies depend on its
//! frequency-relevance band, so sibilants carry energy where hearing-loss filters
//! attenuate most. No real speech is involved.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hearsim_core::confusion::{frequency_relevance_of, FrequencyRelevance};
use hearsim_core::dsp::{write_wav, AudioBuffer, CANONICAL_SAMPLE_RATE};
use hearsim_core::seed::hash_str;
use hearsim_core::Lexicon;

/// Words rendered into the checked-in fixture corpus.
#[rustfmt::skip]
pub const FIXTURE_WORDS: [&str; 138] = [
    "object", "eject", "girls", "girl", "challenged", "challenge", "repainting",
    "recanting", "around", "'round", "musical", "musica", "boys", "boyce", "even", "given",
    "effects", "effect", "few", "feel", "lost", "ast", "shall", "chalk", "wash", "wat",
    "aven", "keep", "kip", "break", "bray", "morning", "earning", "suit", "said", "ability",
    "debility", "substances", "subspaces", "why", "whit", "this", "the", "employees",
    "employers", "cost", "aust", "dog", "god", "made", "mad", "every", "never", "hot",
    "pot", "makes", "mak", "nectar", "ector", "talked", "balke", "miles", "filed", "rag",
    "bagg", "year", "dear", "carry", "capri", "gone", "bode", "lunch", "blanch", "ahead",
    "behead", "dark", "barg", "his", "ein", "most", "move", "often", "bolten", "brother",
    "bother", "conviction", "convictions", "hands", "hand", "please", "cleave", "shredded",
    "threaded", "water", "beater", "beans", "bains", "duck", "wire", "ire", "sat", "fat",
    "seat", "feet", "sheep", "cheap", "ship", "chip", "fish", "dish", "kiss", "kit", "sun",
    "son", "sick", "sip", "zip", "sit", "set", "bus", "buzz", "fuss", "miss", "mist",
    "last", "fast", "past", "see", "she", "tea", "key", "thin", "tin", "van", "fan", "dot",
    "cat", "cap",
];

const SEGMENT_S: f64 = 0.08;
const EDGE_S: f64 = 0.01;

fn band(relevance: FrequencyRelevance) -> (f64, f64) {
    match relevance {
        FrequencyRelevance::High => (3_500.0, 7_000.0),
        FrequencyRelevance::MidHigh => (2_000.0, 4_000.0),
        FrequencyRelevance::Mid => (1_000.0, 2_500.0),
        FrequencyRelevance::General => (200.0, 1_200.0),
    }
}

/// Deterministic rendering of a word's primary pronunciation.
pub fn synthesize_word(word: &str, lex: &Lexicon) -> Result<AudioBuffer<f64>> {
    let pron = lex.require(word)?;
    let sr = CANONICAL_SAMPLE_RATE as f64;
    let seg = (SEGMENT_S * sr) as usize;
    let edge = (EDGE_S * sr) as usize;
    let mut samples = Vec::with_capacity(seg * pron.len());
    for p in pron.tokens() {
        let (lo, hi) = band(frequency_relevance_of(p));
        let h = hash_str(p.base());
        let f1 = lo + (h % 1000) as f64 / 1000.0 * (hi - lo);
        let f2 = lo + ((h >> 20) % 1000) as f64 / 1000.0 * (hi - lo);
        let amp = if p.is_vowel() { 0.3 } else { 0.15 };
        for n in 0..seg {
            let t = n as f64 / sr;
            let env = if n < edge {
                n as f64 / edge as f64
            } else if n >= seg - edge {
                (seg - n) as f64 / edge as f64
            } else {
                1.0
            };
            samples.push(amp * env * (0.6 * (TAU * f1 * t).sin() + 0.4 * (TAU * f2 * t).sin()));
        }
    }
    Ok(AudioBuffer::new(samples, CANONICAL_SAMPLE_RATE)?)
}

/// Writes `wav/<word>.wav` for each word and a `corpus.csv` manifest into `dir`.
pub fn write_fixture_corpus(dir: &Path, words: &[&str], lex: &Lexicon) -> Result<PathBuf> {
    let wav_dir = dir.join("wav");
    std::fs::create_dir_all(&wav_dir).with_context(|| format!("creating {}", wav_dir.display()))?;
    let mut manifest = String::from("word,wav_path\n");
    for w in words {
        let w = w.to_lowercase();
        let audio = synthesize_word(&w, lex)?;
        write_wav(&audio, &wav_dir.join(format!("{w}.wav")))?;
        manifest.push_str(&format!("{w},wav/{w}.wav\n"));
    }
    let path = dir.join("corpus.csv");
    std::fs::write(&path, manifest)?;
    Ok(path)
}
