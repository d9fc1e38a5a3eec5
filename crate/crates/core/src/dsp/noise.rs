use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;

/// RMS level of generated noise before any mixing gain, in dBFS.
pub const PINK_NOISE_LEVEL_DBFS: f64 = -20.0;

/// Seeded pink noise made by shaping Gaussian white noise with a 1/sqrt(f)
/// amplitude response, so the PSD falls 3 dB per octave at every frequency.
pub fn gen_pink_noise<T: Scalar>(
    duration_s: f64,
    sample_rate: u32,
    seed: u64,
) -> Result<AudioBuffer<T>> {
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(Error::validation(format!(
            "noise duration must be positive, got {duration_s}"
        )));
    }
    if sample_rate == 0 {
        return Err(Error::validation("sample rate must be positive"));
    }
    let n = (duration_s * sample_rate as f64).round().max(1.0) as usize;

    let mut rng = seed::rng(seed);
    let mut spec: Vec<Complex<f64>> = (0..n)
        .map(|_| Complex::new(StandardNormal.sample(&mut rng), 0.0))
        .collect();

    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut spec);
    spec[0] = Complex::new(0.0, 0.0);
    for (k, c) in spec.iter_mut().enumerate().skip(1) {
        let bin = k.min(n - k) as f64;
        *c = *c / bin.sqrt();
    }
    planner.plan_fft_inverse(n).process(&mut spec);

    let mut out: Vec<f64> = spec.iter().map(|c| c.re).collect();
    let rms = super::audio::rms(&out);
    if rms > 0.0 {
        let mut gain = 10f64.powf(PINK_NOISE_LEVEL_DBFS / 20.0) / rms;
        let peak = out.iter().fold(0.0f64, |m, s| m.max(s.abs())) * gain;
        if peak > 1.0 {
            gain /= peak;
        }
        out.iter_mut().for_each(|s| *s *= gain);
    }
    Ok(AudioBuffer::from_parts_unchecked(
        out.into_iter().map(T::of).collect(),
        sample_rate,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_arithmetic() {
        let x: AudioBuffer<f64> = gen_pink_noise(0.001, 16_000, 1).unwrap();
        assert_eq!(x.len(), 16);
    }

    #[test]
    fn deterministic_for_seed() {
        let a: AudioBuffer<f32> = gen_pink_noise(0.25, 16_000, 99).unwrap();
        let b: AudioBuffer<f32> = gen_pink_noise(0.25, 16_000, 99).unwrap();
        let c: AudioBuffer<f32> = gen_pink_noise(0.25, 16_000, 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_non_positive_duration() {
        assert!(gen_pink_noise::<f64>(0.0, 16_000, 1).is_err());
        assert!(gen_pink_noise::<f64>(-1.0, 16_000, 1).is_err());
    }

    #[test]
    fn level_and_range() {
        let x: AudioBuffer<f64> = gen_pink_noise(1.0, 16_000, 5).unwrap();
        assert!(x.peak() <= 1.0);
        assert!((x.rms() - 0.1).abs() < 1e-9);
    }
}
