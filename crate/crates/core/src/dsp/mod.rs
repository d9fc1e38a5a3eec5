//! Stimulus preparation: audiogram filtering, pink noise, SNR mixing, levels and WAV I/O.

mod audio;
mod audiogram;
mod filter;
mod mix;
mod noise;
mod wav;

pub use audio::{amplitude_to_db, db_to_amplitude, rms, rms_normalize, AudioBuffer};
pub use audiogram::{Audiogram, MAX_FREQUENCY_HZ, MAX_THRESHOLD_DB_HL, MIN_FREQUENCY_HZ};
pub use filter::{apply_filter, design_hl_filter, FirFilter, DEFAULT_NUM_TAPS, MIN_NUM_TAPS};
pub use mix::{mix_at_snr, MixSpec, Mixture};
pub use noise::{gen_pink_noise, PINK_NOISE_LEVEL_DBFS};
pub use wav::{decode_wav, read_wav, resample, wav_bytes, write_wav, CANONICAL_SAMPLE_RATE};

use crate::error::Result;
use crate::scalar::Scalar;

/// Default presentation level for normalized stimuli.
pub const DEFAULT_LEVEL_DBFS: f64 = -20.0;

/// Full stimulus chain: normalize speech, lay it over seeded pink noise at the
/// requested SNR, then optionally pass everything through the listener filter.
pub fn prepare_stimulus<T: Scalar>(
    speech: &AudioBuffer<T>,
    mix: &MixSpec,
    level_dbfs: f64,
    noise_seed: u64,
    listener: Option<&FirFilter<T>>,
) -> Result<AudioBuffer<T>> {
    let speech = rms_normalize(speech, T::of(level_dbfs))?;
    let sr = speech.sample_rate();
    let needed = mix.required_noise_len(speech.len(), sr);
    let noise = gen_pink_noise(needed as f64 / sr as f64, sr, noise_seed)?;
    let mixed = mix_at_snr(&speech, &noise, mix)?.audio;
    match listener {
        Some(f) => apply_filter(&mixed, f),
        None => Ok(mixed),
    }
}
