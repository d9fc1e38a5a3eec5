//! Item diagnostic value, simulated listener cohorts and ROC analysis.

mod assess;
mod cohort;
mod psychometric;
mod roc;

pub use assess::{
    assess_items, best_per_item, read_item_diagnostics, select_diagnostic, write_item_diagnostics,
    AssessSetup, Assessment, IncompleteItem, ItemDiagnostics, DEFAULT_TRIALS, HEARING_LOSS,
};
pub use cohort::{
    simulate_cohort, CohortConfig, CohortRun, Group, ResponseModel, SimulatedParticipant,
};
pub use psychometric::{logistic, p_correct, PsychometricParams};
pub use roc::{
    classify_human, operating_point, pairwise_auc, roc_analysis, HearingCategory, OperatingPoint,
    RocAnalysis, RocPoint,
};

use crate::curation::CandidatePair;
use crate::edit::levenshtein;
use crate::error::Result;
use crate::lexicon::Lexicon;

/// Phoneme edit distance between target and distractor for every item.
pub fn item_distances(battery: &[CandidatePair], lex: &Lexicon) -> Result<Vec<f64>> {
    battery
        .iter()
        .map(|p| {
            let a = lex.require(&p.target)?;
            let b = lex.require(&p.distractor)?;
            Ok(levenshtein(a.tokens(), b.tokens()) as f64)
        })
        .collect()
}
