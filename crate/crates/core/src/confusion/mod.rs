//! Phoneme alignment, PER, confusion matrices and their articulatory and
//! frequency-band projections.

mod align;
mod classes;
mod dataset;
mod matrix;

pub use align::{align, format_ops, parse_ops, replay, AlignmentResult, EditKind, EditOp};
pub use classes::{
    articulation_projection, frequency_relevance_of, ranked_projection, ArticulationClass,
    ArticulationMap, FrequencyRelevance, RelevanceMap,
};
pub use dataset::{
    matrix_of, read_dataset, write_dataset, write_matrix_csv, ConfusionKey, ConfusionRecord,
};
pub use matrix::{
    round1, symbol_str, Confusion, ConfusionMatrix, ErrorDistribution, Symbol, TypeShare,
};
