use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Mono audio at a fixed sample rate.
///
/// Samples are nominally in [-1, 1]; values outside that range are allowed in
/// intermediate results and clipped when written to 16-bit WAV.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer<T> {
    samples: Vec<T>,
    sample_rate: u32,
}

impl<T: Scalar> AudioBuffer<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::validation("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::validation(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![T::zero(); len], sample_rate)
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> T {
        rms(&self.samples)
    }

    pub fn peak(&self) -> T {
        self.samples
            .iter()
            .fold(T::zero(), |m, s| if s.abs() > m { s.abs() } else { m })
    }

    /// Sample-wise scale; result stays finite for finite gain.
    pub fn scaled(&self, gain: T) -> Self {
        Self {
            samples: self.samples.iter().map(|&s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    pub(crate) fn from_parts_unchecked(samples: Vec<T>, sample_rate: u32) -> Self {
        debug_assert!(samples.iter().all(|s| s.is_finite()));
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn convert<U: Scalar>(&self) -> AudioBuffer<U> {
        AudioBuffer {
            samples: self
                .samples
                .iter()
                .map(|s| U::of(s.to_f64_lossy()))
                .collect(),
            sample_rate: self.sample_rate,
        }
    }
}

/// Root mean square of a slice; zero for an empty slice.
pub fn rms<T: Scalar>(x: &[T]) -> T {
    if x.is_empty() {
        return T::zero();
    }
    let sum = x.iter().fold(0.0f64, |acc, &s| {
        let v = s.to_f64_lossy();
        acc + v * v
    });
    T::of((sum / x.len() as f64).sqrt())
}

pub fn db_to_amplitude<T: Scalar>(db: T) -> T {
    T::of(10.0).powf(db / T::of(20.0))
}

pub fn amplitude_to_db<T: Scalar>(amp: T) -> T {
    T::of(20.0) * amp.log10()
}

/// Scales `audio` so its RMS equals `10^(target_dbfs / 20)`.
pub fn rms_normalize<T: Scalar>(audio: &AudioBuffer<T>, target_dbfs: T) -> Result<AudioBuffer<T>> {
    let current = audio.rms();
    if current <= T::zero() {
        return Err(Error::Domain(
            "cannot RMS-normalize a silent buffer".to_string(),
        ));
    }
    Ok(audio.scaled(db_to_amplitude(target_dbfs) / current))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, amp: f64, n: usize, sr: u32) -> AudioBuffer<f64> {
        let s = (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin())
            .collect();
        AudioBuffer::new(s, sr).unwrap()
    }

    #[test]
    fn rejects_non_finite_and_zero_rate() {
        assert!(AudioBuffer::new(vec![0.0f64, f64::NAN], 16_000).is_err());
        assert!(AudioBuffer::new(vec![0.0f64], 0).is_err());
    }

    #[test]
    fn already_normalized_is_unchanged() {
        let target = 10f64.powf(-20.0 / 20.0);
        let x = sine(440.0, 1.0, 16_000, 16_000);
        let x = x.scaled(target / x.rms());
        let y = rms_normalize(&x, -20.0).unwrap();
        for (a, b) in x.samples().iter().zip(y.samples()) {
            assert!((a - b).abs() <= 1e-6 * a.abs().max(1e-12));
        }
    }

    #[test]
    fn full_scale_sine_to_minus_20() {
        let x = sine(1000.0, 1.0, 16_000, 16_000);
        let y = rms_normalize(&x, -20.0).unwrap();
        assert!((y.rms() - 0.1).abs() / 0.1 < 1e-6);
    }

    #[test]
    fn silent_input_is_a_domain_error() {
        let x = AudioBuffer::<f64>::silence(100, 16_000).unwrap();
        assert!(matches!(rms_normalize(&x, -20.0), Err(Error::Domain(_))));
    }

    #[test]
    fn works_in_f32() {
        let x = sine(300.0, 0.3, 8000, 16_000).convert::<f32>();
        let y = rms_normalize(&x, -26.0f32).unwrap();
        let want = 10f32.powf(-26.0 / 20.0);
        assert!((y.rms() - want).abs() / want < 1e-5);
    }
}
