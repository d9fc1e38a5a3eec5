use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One operating point. A score at or above `threshold` is classified normal hearing;
/// the first point has no threshold (nobody passes).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint<T> {
    pub fpr: T,
    pub tpr: T,
    pub threshold: Option<T>,
}

/// Sensitivity and specificity for detecting hearing impairment at one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint<T> {
    pub threshold: T,
    pub sensitivity: T,
    pub specificity: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocAnalysis<T> {
    pub points: Vec<RocPoint<T>>,
    pub auc: T,
    pub youden: OperatingPoint<T>,
    pub youden_j: T,
    pub fixed: OperatingPoint<T>,
}

fn share_at_or_above<T: Scalar>(scores: &[T], t: T) -> T {
    let n = scores.iter().filter(|&&s| s >= t).count();
    T::of(n as f64 / scores.len() as f64)
}

/// Operating point at `threshold`, with impaired listeners as the detected class.
pub fn operating_point<T: Scalar>(nh: &[T], hi: &[T], threshold: T) -> OperatingPoint<T> {
    OperatingPoint {
        threshold,
        sensitivity: T::one() - share_at_or_above(hi, threshold),
        specificity: share_at_or_above(nh, threshold),
    }
}

/// Sweeps every distinct score as a threshold, NH as the positive class.
pub fn roc_analysis<T: Scalar>(nh: &[T], hi: &[T], fixed_threshold: T) -> Result<RocAnalysis<T>> {
    if nh.is_empty() || hi.is_empty() {
        return Err(Error::validation(
            "ROC analysis needs scores from both groups",
        ));
    }
    if nh.iter().chain(hi).any(|s| !s.is_finite()) {
        return Err(Error::validation("scores must be finite"));
    }
    let mut thresholds: Vec<T> = nh.iter().chain(hi).copied().collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    thresholds.dedup();

    let mut points = vec![RocPoint {
        fpr: T::zero(),
        tpr: T::zero(),
        threshold: None,
    }];
    for &t in &thresholds {
        points.push(RocPoint {
            fpr: share_at_or_above(hi, t),
            tpr: share_at_or_above(nh, t),
            threshold: Some(t),
        });
    }

    let half = T::of(0.5);
    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) * half)
        .fold(T::zero(), |a, b| a + b);

    // thresholds descend, so a strict improvement keeps the higher one on ties
    let mut best = (T::neg_infinity(), thresholds[0]);
    for p in &points[1..] {
        let j = p.tpr - p.fpr;
        if j > best.0 {
            best = (j, p.threshold.expect("swept point"));
        }
    }

    Ok(RocAnalysis {
        points,
        auc,
        youden: operating_point(nh, hi, best.1),
        youden_j: best.0,
        fixed: operating_point(nh, hi, fixed_threshold),
    })
}

/// P(NH > HI) + P(tie) / 2 by direct pair counting.
pub fn pairwise_auc<T: Scalar>(nh: &[T], hi: &[T]) -> T {
    let mut acc = 0.0;
    for a in nh {
        for b in hi {
            acc += if a > b {
                1.0
            } else if a == b {
                0.5
            } else {
                0.0
            };
        }
    }
    T::of(acc / (nh.len() * hi.len()) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HearingCategory {
    #[serde(rename = "Normal Hearing")]
    NormalHearing,
    #[serde(rename = "Hearing Loss")]
    HearingLoss,
}

impl HearingCategory {
    pub fn name(self) -> &'static str {
        match self {
            HearingCategory::NormalHearing => "Normal Hearing",
            HearingCategory::HearingLoss => "Hearing Loss",
        }
    }
}

impl fmt::Display for HearingCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Category whose reference mean is closer to `score`; the midpoint is referred.
pub fn classify_human(score: f64, nh_mean: f64, hl_mean: f64) -> Result<HearingCategory> {
    if !(score.is_finite() && nh_mean.is_finite() && hl_mean.is_finite()) {
        return Err(Error::validation("scores must be finite"));
    }
    if nh_mean == hl_mean {
        return Err(Error::Domain(
            "reference means are equal; classification is indeterminate".into(),
        ));
    }
    Ok(if (score - nh_mean).abs() < (score - hl_mean).abs() {
        HearingCategory::NormalHearing
    } else {
        HearingCategory::HearingLoss
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_separation() {
        let r = roc_analysis(&[90.0, 95.0], &[60.0, 70.0], 80.0).unwrap();
        assert_eq!(r.auc, 1.0);
        assert_eq!(r.youden.sensitivity, 1.0);
        assert_eq!(r.youden.specificity, 1.0);
        assert_eq!(r.youden.threshold, 90.0);
        assert_eq!(r.fixed.sensitivity, 1.0);
        assert_eq!(r.fixed.specificity, 1.0);
        let first = r.points[0];
        let last = *r.points.last().unwrap();
        assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
    }

    #[test]
    fn identical_groups_give_half() {
        let s = [50.0f64, 60.0, 60.0, 70.0];
        let r = roc_analysis(&s, &s, 80.0).unwrap();
        assert!((r.auc - 0.5).abs() < 1e-12);
        assert!((pairwise_auc::<f64>(&s, &s) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_class_rejected() {
        assert!(roc_analysis::<f64>(&[], &[1.0], 80.0).is_err());
    }

    #[test]
    fn classification_rules() {
        use HearingCategory::*;
        assert_eq!(classify_human(90.0, 92.0, 60.0).unwrap(), NormalHearing);
        assert_eq!(classify_human(61.0, 92.0, 60.0).unwrap(), HearingLoss);
        assert_eq!(classify_human(76.0, 92.0, 60.0).unwrap(), HearingLoss);
        assert!(classify_human(76.0, 60.0, 60.0).is_err());
    }
}
