use std::collections::{HashMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asr::{forced_choice, ChoiceMode, Transcriber, TranscriptionRequest, NORMAL_HEARING};
use crate::curation::CandidatePair;
use crate::dsp::{prepare_stimulus, AudioBuffer, FirFilter, MixSpec, DEFAULT_LEVEL_DBFS};
use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::seed;

pub const DEFAULT_TRIALS: usize = 50;
/// Condition label used for the hearing-loss simulation.
pub const HEARING_LOSS: &str = "HL";

/// Percent-correct comparison for one word pair at one SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemDiagnostics {
    #[serde(rename = "OriginalWord")]
    pub target: String,
    #[serde(rename = "Distractor")]
    pub distractor: String,
    #[serde(rename = "SNR")]
    pub snr_db: f64,
    #[serde(rename = "NH_Perc_corr")]
    pub nh_correct_pct: f64,
    #[serde(rename = "HL_Perc_corr")]
    pub hl_correct_pct: f64,
    #[serde(rename = "Difference")]
    pub difference: f64,
}

impl ItemDiagnostics {
    pub fn new(
        target: impl Into<String>,
        distractor: impl Into<String>,
        snr_db: f64,
        nh_correct_pct: f64,
        hl_correct_pct: f64,
    ) -> Result<Self> {
        for p in [nh_correct_pct, hl_correct_pct] {
            if !(0.0..=100.0).contains(&p) {
                return Err(Error::validation(format!(
                    "percentage {p} outside [0, 100]"
                )));
            }
        }
        Ok(Self {
            target: target.into(),
            distractor: distractor.into(),
            snr_db,
            nh_correct_pct,
            hl_correct_pct,
            difference: nh_correct_pct - hl_correct_pct,
        })
    }

    /// Builds the row from stored per-trial outcomes (`true` = correct).
    pub fn from_outcomes(
        target: impl Into<String>,
        distractor: impl Into<String>,
        snr_db: f64,
        nh: &[bool],
        hl: &[bool],
    ) -> Result<Self> {
        Self::new(target, distractor, snr_db, percent(nh)?, percent(hl)?)
    }
}

fn percent(outcomes: &[bool]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::validation("no trials"));
    }
    Ok(100.0 * outcomes.iter().filter(|&&c| c).count() as f64 / outcomes.len() as f64)
}

/// An item that could not be assessed at some SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncompleteItem {
    pub target: String,
    pub distractor: String,
    pub snr_db: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assessment {
    pub items: Vec<ItemDiagnostics>,
    pub incomplete: Vec<IncompleteItem>,
}

/// Everything `assess_items` needs besides the battery.
pub struct AssessSetup<'a> {
    /// Recording per target word.
    pub speech: &'a HashMap<String, AudioBuffer<f64>>,
    pub transcriber: &'a dyn Transcriber,
    pub lexicon: &'a Lexicon,
    /// Listener filter for the hearing-loss condition.
    pub hl_filter: &'a FirFilter<f64>,
    pub lead_in_s: f64,
    pub ramp_s: f64,
    pub level_dbfs: f64,
    pub trials: usize,
    pub choice: ChoiceMode,
    pub seed: u64,
}

impl<'a> AssessSetup<'a> {
    pub fn new(
        speech: &'a HashMap<String, AudioBuffer<f64>>,
        transcriber: &'a dyn Transcriber,
        lexicon: &'a Lexicon,
        hl_filter: &'a FirFilter<f64>,
    ) -> Self {
        let mix = MixSpec::default();
        Self {
            speech,
            transcriber,
            lexicon,
            hl_filter,
            lead_in_s: mix.lead_in_s,
            ramp_s: mix.ramp_s,
            level_dbfs: DEFAULT_LEVEL_DBFS,
            trials: DEFAULT_TRIALS,
            choice: ChoiceMode::Deterministic,
            seed: 0,
        }
    }
}

/// Runs NH (noise only) and HL (noise plus listener filter) trials for every item and
/// SNR. Items whose recording or backend fails are reported as incomplete.
pub fn assess_items(
    battery: &[CandidatePair],
    snr_levels: &[f64],
    setup: &AssessSetup<'_>,
) -> Result<Assessment> {
    if battery.is_empty() {
        return Err(Error::validation("battery is empty"));
    }
    if snr_levels.is_empty() {
        return Err(Error::validation("no SNR levels"));
    }
    if setup.trials == 0 {
        return Err(Error::validation("trials_per_condition must be at least 1"));
    }
    let units: Vec<(usize, usize)> = (0..battery.len())
        .flat_map(|i| (0..snr_levels.len()).map(move |s| (i, s)))
        .collect();
    let results: Vec<std::result::Result<ItemDiagnostics, IncompleteItem>> = units
        .par_iter()
        .map(|&(i, s)| {
            let item = &battery[i];
            let snr = snr_levels[s];
            assess_one(item, i, snr, setup).map_err(|e| IncompleteItem {
                target: item.target.clone(),
                distractor: item.distractor.clone(),
                snr_db: snr,
                reason: e.to_string(),
            })
        })
        .collect();

    let mut out = Assessment::default();
    let mut failed: HashSet<usize> = HashSet::new();
    for (&(i, _), r) in units.iter().zip(&results) {
        if r.is_err() {
            failed.insert(i);
        }
    }
    for (&(i, _), r) in units.iter().zip(results) {
        match r {
            Ok(d) if !failed.contains(&i) => out.items.push(d),
            Ok(_) => {}
            Err(e) => out.incomplete.push(e),
        }
    }
    Ok(out)
}

fn assess_one(
    item: &CandidatePair,
    index: usize,
    snr: f64,
    setup: &AssessSetup<'_>,
) -> Result<ItemDiagnostics> {
    let speech = setup
        .speech
        .get(&item.target)
        .ok_or_else(|| Error::Lookup(format!("no recording for {:?}", item.target)))?;
    let mix = MixSpec {
        snr_db: snr,
        lead_in_s: setup.lead_in_s,
        ramp_s: setup.ramp_s,
    };
    let item_seed = seed::derive(
        setup.seed,
        &[
            seed::hash_str(&item.target),
            seed::hash_str(&item.distractor),
            index as u64,
            snr.to_bits(),
        ],
    );
    let mut outcomes = [Vec::new(), Vec::new()];
    for (c, (label, filter)) in [
        (NORMAL_HEARING, None),
        (HEARING_LOSS, Some(setup.hl_filter)),
    ]
    .into_iter()
    .enumerate()
    {
        for t in 0..setup.trials {
            let trial_seed = seed::derive(item_seed, &[c as u64, t as u64]);
            let stimulus;
            let audio = if setup.transcriber.uses_audio() {
                stimulus = prepare_stimulus(
                    speech,
                    &mix,
                    setup.level_dbfs,
                    seed::derive(trial_seed, &[0]),
                    filter,
                )?;
                &stimulus
            } else {
                speech
            };
            let heard = setup.transcriber.transcribe(&TranscriptionRequest {
                audio,
                condition_label: label,
                word: Some(&item.target),
                seed: seed::derive(trial_seed, &[1]),
            })?;
            let chosen = forced_choice(
                &heard,
                &item.target,
                &item.distractor,
                setup.lexicon,
                setup.choice,
                seed::derive(trial_seed, &[2]),
            )?;
            outcomes[c].push(chosen.eq_ignore_ascii_case(&item.target));
        }
    }
    ItemDiagnostics::from_outcomes(
        &item.target,
        &item.distractor,
        snr,
        &outcomes[0],
        &outcomes[1],
    )
}

/// Row with the largest difference per (target, distractor), in first-seen item order.
/// Equal differences keep the earlier SNR.
pub fn best_per_item(items: &[ItemDiagnostics]) -> Vec<ItemDiagnostics> {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut best: HashMap<(String, String), ItemDiagnostics> = HashMap::new();
    for d in items {
        let key = (d.target.clone(), d.distractor.clone());
        match best.get(&key) {
            None => {
                order.push(key.clone());
                best.insert(key, d.clone());
            }
            Some(b) if d.difference > b.difference => {
                best.insert(key, d.clone());
            }
            Some(_) => {}
        }
    }
    order
        .into_iter()
        .map(|k| best.remove(&k).expect("seen"))
        .collect()
}

/// Items whose best difference exceeds `threshold_pp`, sorted by difference
/// descending; equal differences keep input order.
pub fn select_diagnostic(
    items: &[ItemDiagnostics],
    threshold_pp: f64,
) -> Result<Vec<ItemDiagnostics>> {
    if !(threshold_pp >= 0.0) {
        return Err(Error::validation("threshold must be non-negative"));
    }
    let mut kept: Vec<ItemDiagnostics> = best_per_item(items)
        .into_iter()
        .filter(|d| d.difference > threshold_pp)
        .collect();
    kept.sort_by(|a, b| b.difference.total_cmp(&a.difference));
    Ok(kept)
}

pub fn write_item_diagnostics(path: &Path, items: &[ItemDiagnostics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for d in items {
        w.serialize(d)?;
    }
    w.flush()
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(())
}

pub fn read_item_diagnostics(path: &Path) -> Result<Vec<ItemDiagnostics>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in rdr.deserialize::<ItemDiagnostics>() {
        let d = row?;
        out.push(ItemDiagnostics::new(
            d.target,
            d.distractor,
            d.snr_db,
            d.nh_correct_pct,
            d.hl_correct_pct,
        )?);
    }
    Ok(out)
}
