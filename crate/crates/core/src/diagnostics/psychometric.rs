use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsychometricParams {
    /// Logistic slope per unit of phoneme distance.
    pub k: f64,
    /// Penalty per dB HL of mean threshold.
    pub lambda: f64,
    pub chance_floor: f64,
}

impl Default for PsychometricParams {
    fn default() -> Self {
        Self {
            k: 0.8,
            lambda: 0.05,
            chance_floor: 0.5,
        }
    }
}

impl PsychometricParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0) || !(self.lambda >= 0.0) || !(0.0..1.0).contains(&self.chance_floor) {
            return Err(Error::validation(
                "psychometric params need k > 0, lambda >= 0, chance_floor in [0, 1)",
            ));
        }
        Ok(())
    }
}

pub fn logistic<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// `max(chance_floor, logistic(k * delta_d - lambda * mean_hl_db))`.
pub fn p_correct<T: Scalar>(delta_d: T, mean_hl_db: T, params: &PsychometricParams) -> T {
    let x = T::of(params.k) * delta_d - T::of(params.lambda) * mean_hl_db;
    logistic(x).max(T::of(params.chance_floor))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_points() {
        let p = PsychometricParams::default();
        assert_eq!(p_correct(0.0, 0.0, &p), 0.5);
        let want = 1.0 / (1.0 + (-2.4f64).exp());
        assert!((p_correct(3.0, 0.0, &p) - want).abs() < 1e-12);
        assert!((p_correct(3.0f64, 40.0, &p) - 0.598_687_660_112_452).abs() < 1e-12);
        assert!((p_correct(3.0f32, 0.0, &p) - want as f32).abs() < 1e-6);
    }

    #[test]
    fn floor_applies() {
        let p = PsychometricParams::default();
        assert_eq!(p_correct(1.0, 70.0, &p), 0.5);
        let p0 = PsychometricParams {
            chance_floor: 0.0,
            ..p
        };
        assert!(p_correct(1.0, 70.0, &p0) < 0.1);
    }

    #[test]
    fn validation() {
        assert!(PsychometricParams::default().validate().is_ok());
        let bad = PsychometricParams {
            k: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = PsychometricParams {
            chance_floor: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
