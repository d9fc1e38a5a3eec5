//! Hearing-loss simulation and ASR-derived phoneme confusion analysis for building
//! frequency-specific two-alternative forced-choice speech tests.
//!
//! Signal and statistics code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the scalar for callers that do not care.

pub mod asr;
pub mod confusion;
pub mod corpus;
pub mod curation;
pub mod diagnostics;
pub mod dsp;
pub mod edit;
pub mod error;
pub mod lexicon;
pub mod phoneme;
pub mod scalar;
pub mod seed;

pub use error::{Error, Result};
pub use lexicon::Lexicon;
pub use phoneme::{Phoneme, PhonemeSequence};
pub use scalar::Scalar;

pub type AudioBuffer = dsp::AudioBuffer<f64>;
pub type AudioBuffer32 = dsp::AudioBuffer<f32>;
pub type FirFilter = dsp::FirFilter<f64>;
pub type FirFilter32 = dsp::FirFilter<f32>;
pub type CohortRun = diagnostics::CohortRun<f64>;
pub type CohortRun32 = diagnostics::CohortRun<f32>;
