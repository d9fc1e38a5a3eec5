use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_FREQUENCY_HZ: f64 = 125.0;
pub const MAX_FREQUENCY_HZ: f64 = 16_000.0;
pub const MAX_THRESHOLD_DB_HL: f64 = 120.0;

/// Hearing thresholds (dB HL) at ascending audiometric frequencies.
///
/// Serialized as `{"name": "...", "points": [[250, 10], [500, 20], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAudiogram", into = "RawAudiogram")]
pub struct Audiogram {
    name: String,
    points: Vec<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
struct RawAudiogram {
    name: String,
    points: Vec<(f64, f64)>,
}

impl TryFrom<RawAudiogram> for Audiogram {
    type Error = Error;

    fn try_from(raw: RawAudiogram) -> Result<Self> {
        Audiogram::new(raw.name, raw.points)
    }
}

impl From<Audiogram> for RawAudiogram {
    fn from(a: Audiogram) -> Self {
        RawAudiogram {
            name: a.name,
            points: a.points,
        }
    }
}

const STANDARD_FREQUENCIES: [f64; 6] = [250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0];

impl Audiogram {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::validation("audiogram needs at least 2 points"));
        }
        for (i, &(f, t)) in points.iter().enumerate() {
            if !f.is_finite() || !(MIN_FREQUENCY_HZ..=MAX_FREQUENCY_HZ).contains(&f) {
                return Err(Error::validation(format!(
                    "audiogram frequency {f} Hz outside [{MIN_FREQUENCY_HZ}, {MAX_FREQUENCY_HZ}]"
                )));
            }
            if !t.is_finite() || !(0.0..=MAX_THRESHOLD_DB_HL).contains(&t) {
                return Err(Error::validation(format!(
                    "threshold {t} dB HL at {f} Hz outside [0, {MAX_THRESHOLD_DB_HL}]"
                )));
            }
            if i > 0 && f <= points[i - 1].0 {
                return Err(Error::validation(
                    "audiogram frequencies must be strictly increasing",
                ));
            }
        }
        Ok(Audiogram {
            name: name.into(),
            points,
        })
    }

    /// 0 dB HL at every standard frequency.
    pub fn normal() -> Self {
        Self::standard("Normal", [0.0; 6])
    }

    /// Mild sloping loss, 5 dB HL at 250 Hz to 50 dB HL at 8 kHz.
    pub fn mild() -> Self {
        Self::standard("Mild", [5.0, 10.0, 20.0, 30.0, 40.0, 50.0])
    }

    /// Moderate sloping loss, 10 dB HL at 250 Hz to 70 dB HL at 8 kHz.
    pub fn moderate() -> Self {
        Self::standard("Moderate", [10.0, 20.0, 30.0, 45.0, 60.0, 70.0])
    }

    /// Looks up one of the shipped profiles by case-insensitive name.
    pub fn builtin(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "normal" => Some(Self::normal()),
            "mild" => Some(Self::mild()),
            "moderate" => Some(Self::moderate()),
            _ => None,
        }
    }

    fn standard(name: &str, thresholds: [f64; 6]) -> Self {
        let points = STANDARD_FREQUENCIES.into_iter().zip(thresholds).collect();
        Audiogram::new(name, points).expect("shipped profile is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading audiogram {}", path.display()), e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn max_frequency(&self) -> f64 {
        self.points[self.points.len() - 1].0
    }

    /// Unweighted mean threshold over the listed frequencies.
    pub fn mean_threshold(&self) -> f64 {
        self.points.iter().map(|p| p.1).sum::<f64>() / self.points.len() as f64
    }

    /// Threshold at `freq_hz`, linear in dB over log2 frequency between points and held flat
    /// outside the measured range.
    pub fn threshold_at(&self, freq_hz: f64) -> f64 {
        let first = self.points[0];
        let last = self.points[self.points.len() - 1];
        if !(freq_hz > first.0) {
            return first.1;
        }
        if freq_hz >= last.0 {
            return last.1;
        }
        let idx = self.points.partition_point(|p| p.0 <= freq_hz);
        let (f0, t0) = self.points[idx - 1];
        let (f1, t1) = self.points[idx];
        let x = (freq_hz / f0).log2() / (f1 / f0).log2();
        t0 + x * (t1 - t0)
    }

    /// Returns a copy with thresholds replaced; used for perturbed cohort profiles.
    pub fn with_thresholds(&self, name: impl Into<String>, thresholds: &[f64]) -> Result<Self> {
        if thresholds.len() != self.points.len() {
            return Err(Error::validation(
                "threshold count does not match audiogram",
            ));
        }
        let points = self
            .points
            .iter()
            .zip(thresholds)
            .map(|(&(f, _), &t)| (f, t))
            .collect();
        Audiogram::new(name, points)
    }
}
