//! Audiogram-shaped linear-phase FIR design and zero-delay application.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::audio::AudioBuffer;
use super::audiogram::Audiogram;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_NUM_TAPS: usize = 1024;
pub const MIN_NUM_TAPS: usize = 64;

/// Dense design grid, as a multiple of the filter length.
const GRID_OVERSAMPLING: usize = 16;
const KAISER_BETA: f64 = 6.0;

/// Symmetric (type I) FIR coefficients. The length is always odd so the group
/// delay is a whole number of samples and the Nyquist gain is unconstrained.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter<T> {
    taps: Vec<T>,
}

impl<T: Scalar> FirFilter<T> {
    pub fn from_taps(taps: Vec<T>) -> Result<Self> {
        if taps.len() % 2 == 0 || taps.is_empty() {
            return Err(Error::validation("FIR length must be odd"));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::validation("non-finite FIR tap"));
        }
        Ok(Self { taps })
    }

    /// Unit impulse at the centre tap.
    pub fn identity(num_taps: usize) -> Self {
        let len = odd_length(num_taps.max(1));
        let mut taps = vec![T::zero(); len];
        taps[len / 2] = T::one();
        Self { taps }
    }

    pub fn taps(&self) -> &[T] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn group_delay(&self) -> usize {
        self.taps.len() / 2
    }

    /// Magnitude response in dB at one frequency, by direct evaluation.
    pub fn magnitude_db_at(&self, freq_hz: f64, sample_rate: u32) -> f64 {
        let w = 2.0 * std::f64::consts::PI * freq_hz / sample_rate as f64;
        let (re, im) = self
            .taps
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(re, im), (n, &h)| {
                let h = h.to_f64_lossy();
                let ph = w * n as f64;
                (re + h * ph.cos(), im - h * ph.sin())
            });
        10.0 * (re * re + im * im).log10()
    }
}

fn odd_length(n: usize) -> usize {
    if n % 2 == 0 {
        n + 1
    } else {
        n
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn kaiser(len: usize, beta: f64) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let denom = bessel_i0(beta);
    let m = (len - 1) as f64;
    (0..len)
        .map(|n| {
            let r = 2.0 * n as f64 / m - 1.0;
            bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / denom
        })
        .collect()
}

/// Designs a linear-phase FIR whose gain at each frequency is `-threshold(f)` dB.
///
/// The target is sampled on a dense grid, inverse transformed to a zero-phase
/// impulse response, centred and Kaiser-windowed. An even `num_taps` is rounded
/// up to the next odd length.
pub fn design_hl_filter<T: Scalar>(
    audiogram: &Audiogram,
    sample_rate: u32,
    num_taps: usize,
) -> Result<FirFilter<T>> {
    if num_taps < MIN_NUM_TAPS {
        return Err(Error::validation(format!(
            "num_taps {num_taps} below minimum {MIN_NUM_TAPS}"
        )));
    }
    let fs = sample_rate as f64;
    if fs < 2.0 * audiogram.max_frequency() {
        return Err(Error::Domain(format!(
            "sample rate {sample_rate} Hz below twice the highest audiogram frequency ({} Hz)",
            audiogram.max_frequency()
        )));
    }
    let len = odd_length(num_taps);
    let grid = (len * GRID_OVERSAMPLING).next_power_of_two();

    let mut spectrum: Vec<Complex<f64>> = (0..grid)
        .map(|k| {
            let bin = k.min(grid - k);
            let freq = bin as f64 * fs / grid as f64;
            let gain = 10f64.powf(-audiogram.threshold_at(freq) / 20.0);
            Complex::new(gain, 0.0)
        })
        .collect();
    FftPlanner::<f64>::new()
        .plan_fft_inverse(grid)
        .process(&mut spectrum);

    let half = len / 2;
    let window = kaiser(len, KAISER_BETA);
    let taps = (0..len)
        .map(|n| {
            let idx = (n + grid - half) % grid;
            T::of(spectrum[idx].re / grid as f64 * window[n])
        })
        .collect();
    Ok(FirFilter { taps })
}

/// Filters `audio` with zero-padded FFT convolution and removes the group delay so
/// output and input have the same length and alignment.
pub fn apply_filter<T: Scalar>(
    audio: &AudioBuffer<T>,
    filter: &FirFilter<T>,
) -> Result<AudioBuffer<T>> {
    if audio.is_empty() {
        return Err(Error::validation("cannot filter an empty buffer"));
    }
    let x = audio.samples();
    let h = filter.taps();
    let full = x.len() + h.len() - 1;
    let n = full.next_power_of_two();

    let mut planner = FftPlanner::<T>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    let mut xs: Vec<Complex<T>> = padded(x, n);
    let mut hs: Vec<Complex<T>> = padded(h, n);
    fwd.process(&mut xs);
    fwd.process(&mut hs);
    for (a, b) in xs.iter_mut().zip(&hs) {
        *a = *a * *b;
    }
    inv.process(&mut xs);

    let scale = T::one() / T::of(n as f64);
    let delay = filter.group_delay();
    let out = xs[delay..delay + x.len()]
        .iter()
        .map(|c| c.re * scale)
        .collect();
    Ok(AudioBuffer::from_parts_unchecked(out, audio.sample_rate()))
}

fn padded<T: Scalar>(x: &[T], n: usize) -> Vec<Complex<T>> {
    let mut v: Vec<Complex<T>> = x.iter().map(|&s| Complex::new(s, T::zero())).collect();
    v.resize(n, Complex::new(T::zero(), T::zero()));
    v
}
