use serde::{Deserialize, Serialize};

use super::audio::{db_to_amplitude, rms, AudioBuffer};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Noise-bed layout for a single stimulus. The lead-out has the same length as the lead-in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixSpec {
    pub snr_db: f64,
    pub lead_in_s: f64,
    pub ramp_s: f64,
}

impl Default for MixSpec {
    fn default() -> Self {
        Self {
            snr_db: 10.0,
            lead_in_s: 0.5,
            ramp_s: 0.05,
        }
    }
}

impl MixSpec {
    pub fn at_snr(snr_db: f64) -> Self {
        Self {
            snr_db,
            ..Self::default()
        }
    }

    /// Number of noise samples needed for a speech segment of `speech_len` samples.
    pub fn required_noise_len(&self, speech_len: usize, sample_rate: u32) -> usize {
        2 * seconds_to_samples(self.lead_in_s, sample_rate) + speech_len
    }
}

fn seconds_to_samples(s: f64, sample_rate: u32) -> usize {
    (s * sample_rate as f64).round() as usize
}

#[derive(Debug, Clone)]
pub struct Mixture<T> {
    pub audio: AudioBuffer<T>,
    /// Gain applied to the (ramped) noise bed.
    pub noise_gain: T,
    /// Index of the first speech sample in `audio`.
    pub speech_start: usize,
}

/// Lays `speech` over a ramped noise bed with lead-in and lead-out, scaling the
/// noise so the SNR measured over the speech region equals `spec.snr_db`.
pub fn mix_at_snr<T: Scalar>(
    speech: &AudioBuffer<T>,
    noise: &AudioBuffer<T>,
    spec: &MixSpec,
) -> Result<Mixture<T>> {
    if speech.sample_rate() != noise.sample_rate() {
        return Err(Error::validation(format!(
            "sample rate mismatch: speech {} Hz, noise {} Hz",
            speech.sample_rate(),
            noise.sample_rate()
        )));
    }
    if !(spec.lead_in_s >= 0.0) || !(spec.ramp_s >= 0.0) || !spec.snr_db.is_finite() {
        return Err(Error::validation(
            "lead-in and ramp must be non-negative and SNR finite",
        ));
    }
    if speech.is_empty() {
        return Err(Error::validation("speech buffer is empty"));
    }
    let sr = speech.sample_rate();
    let lead = seconds_to_samples(spec.lead_in_s, sr);
    let ramp = seconds_to_samples(spec.ramp_s, sr);
    let total = spec.required_noise_len(speech.len(), sr);
    if noise.len() < total {
        return Err(Error::validation(format!(
            "noise has {} samples, need {total} to cover lead-in, speech and lead-out",
            noise.len()
        )));
    }
    if 2 * ramp > total {
        return Err(Error::validation("ramps longer than the noise bed"));
    }

    let mut bed: Vec<T> = noise.samples()[..total].to_vec();
    for i in 0..ramp {
        let w = raised_cosine(i, ramp);
        bed[i] = bed[i] * w;
        bed[total - 1 - i] = bed[total - 1 - i] * w;
    }

    let speech_rms = speech.rms();
    let noise_rms = rms(&bed[lead..lead + speech.len()]);
    if speech_rms <= T::zero() || noise_rms <= T::zero() {
        return Err(Error::Domain(
            "speech and noise must both have energy over the speech region".into(),
        ));
    }
    let gain = speech_rms / (noise_rms * db_to_amplitude(T::of(spec.snr_db)));

    let mut out: Vec<T> = bed.iter().map(|&n| n * gain).collect();
    for (o, &s) in out[lead..lead + speech.len()]
        .iter_mut()
        .zip(speech.samples())
    {
        *o = *o + s;
    }
    Ok(Mixture {
        audio: AudioBuffer::from_parts_unchecked(out, sr),
        noise_gain: gain,
        speech_start: lead,
    })
}

/// Rising half-cosine weight for sample `i` of an `n`-sample ramp.
fn raised_cosine<T: Scalar>(i: usize, n: usize) -> T {
    let x = (i as f64 + 0.5) / n as f64;
    T::of(0.5 * (1.0 - (std::f64::consts::PI * x).cos()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::noise::gen_pink_noise;

    fn measured_snr(m: &Mixture<f64>, speech: &AudioBuffer<f64>) -> f64 {
        let region = &m.audio.samples()[m.speech_start..m.speech_start + speech.len()];
        let residual: Vec<f64> = region
            .iter()
            .zip(speech.samples())
            .map(|(o, s)| o - s)
            .collect();
        20.0 * (speech.rms() / rms(&residual)).log10()
    }

    fn tone(n: usize) -> AudioBuffer<f64> {
        let s = (0..n)
            .map(|i| 0.2 * (2.0 * std::f64::consts::PI * 500.0 * i as f64 / 16_000.0).sin())
            .collect();
        AudioBuffer::new(s, 16_000).unwrap()
    }

    #[test]
    fn zero_db_with_equal_rms_has_unit_gain() {
        let noise: AudioBuffer<f64> = gen_pink_noise(2.0, 16_000, 3).unwrap();
        let spec = MixSpec {
            snr_db: 0.0,
            lead_in_s: 0.5,
            ramp_s: 0.05,
        };
        // speech is the very noise segment that ends up under it, so RMS match is exact
        let speech_len = 8000;
        let speech = AudioBuffer::new(noise.samples()[8000..16_000].to_vec(), 16_000).unwrap();
        let m = mix_at_snr(&speech, &noise, &spec).unwrap();
        assert!((m.noise_gain - 1.0).abs() < 0.01);
        assert_eq!(m.audio.len(), speech_len + 16_000);
    }

    #[test]
    fn ten_db_measures_ten_db() {
        let speech = tone(12_000);
        let noise: AudioBuffer<f64> = gen_pink_noise(3.0, 16_000, 11).unwrap();
        let m = mix_at_snr(&speech, &noise, &MixSpec::at_snr(10.0)).unwrap();
        assert!((measured_snr(&m, &speech) - 10.0).abs() <= 0.2);
    }

    #[test]
    fn ramps_start_and_end_quiet() {
        let speech = tone(4000);
        let noise: AudioBuffer<f64> = gen_pink_noise(2.0, 16_000, 1).unwrap();
        let m = mix_at_snr(&speech, &noise, &MixSpec::default()).unwrap();
        let s = m.audio.samples();
        let edge = rms(&s[..40]);
        let body = rms(&s[2000..6000]);
        assert!(edge < body * 0.2);
        assert!(rms(&s[s.len() - 40..]) < body * 0.2);
    }

    #[test]
    fn validation_errors() {
        let speech = tone(16_000);
        let short: AudioBuffer<f64> = gen_pink_noise(1.2, 16_000, 1).unwrap();
        assert!(matches!(
            mix_at_snr(&speech, &short, &MixSpec::default()),
            Err(Error::Validation(_))
        ));
        let other_rate: AudioBuffer<f64> = gen_pink_noise(3.0, 22_050, 1).unwrap();
        assert!(matches!(
            mix_at_snr(&speech, &other_rate, &MixSpec::default()),
            Err(Error::Validation(_))
        ));
    }
}
