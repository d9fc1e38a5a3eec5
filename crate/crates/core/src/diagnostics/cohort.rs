use std::fmt;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::psychometric::{p_correct, PsychometricParams};
use super::roc::{roc_analysis, OperatingPoint, RocPoint};
use crate::dsp::{Audiogram, MAX_THRESHOLD_DB_HL};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    NH,
    HI,
}

impl Group {
    pub fn name(self) -> &'static str {
        match self {
            Group::NH => "NH",
            Group::HI => "HI",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedParticipant<T> {
    pub group: Group,
    pub audiogram: Audiogram,
    pub seed: u64,
    pub item_subset: Vec<usize>,
    /// Percent correct.
    pub score: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortConfig {
    pub n_nh: usize,
    pub n_hi: usize,
    pub subset_size: usize,
    /// Half-width of the uniform per-frequency perturbation of the impaired audiogram.
    pub perturbation_db: f64,
    /// Pass mark in percent correct.
    pub fixed_threshold: f64,
    pub seed: u64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self {
            n_nh: 50,
            n_hi: 50,
            subset_size: 50,
            perturbation_db: 10.0,
            fixed_threshold: 80.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRun<T> {
    pub participants: Vec<SimulatedParticipant<T>>,
    pub roc: Vec<RocPoint<T>>,
    pub auc: T,
    pub youden_j: T,
    pub youden: OperatingPoint<T>,
    pub fixed: OperatingPoint<T>,
    pub nh_mean: T,
    pub hi_mean: T,
    pub config: CohortConfig,
    pub params: Option<PsychometricParams>,
    pub seed: u64,
}

impl<T: Scalar> CohortRun<T> {
    pub fn scores(&self, group: Group) -> Vec<T> {
        self.participants
            .iter()
            .filter(|p| p.group == group)
            .map(|p| p.score)
            .collect()
    }

    pub fn to_json(&self) -> Result<String>
    where
        T: Serialize,
    {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `group,score` rows for histogram and box-plot data.
    pub fn write_scores_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["group", "score"])?;
        for p in &self.participants {
            w.write_record([p.group.name(), &p.score.to_f64_lossy().to_string()])?;
        }
        w.flush()
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        Ok(())
    }
}

/// Where per-item probabilities of a correct response come from.
#[derive(Debug, Clone, Copy)]
pub enum ResponseModel<'a, T> {
    /// Psychometric function of each item's phoneme distance and the listener's
    /// mean threshold.
    Psychometric {
        delta_d: &'a [T],
        params: &'a PsychometricParams,
    },
    /// Measured correct-response rates in `[0, 1]` of the NH and HL recognizers.
    Measured { nh: &'a [T], hl: &'a [T] },
}

impl<T: Scalar> ResponseModel<'_, T> {
    fn n_items(&self) -> usize {
        match self {
            ResponseModel::Psychometric { delta_d, .. } => delta_d.len(),
            ResponseModel::Measured { nh, .. } => nh.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ResponseModel::Psychometric { delta_d, params } => {
                params.validate()?;
                if delta_d.iter().any(|d| !(*d >= T::zero())) {
                    return Err(Error::validation("phoneme distances must be non-negative"));
                }
            }
            ResponseModel::Measured { nh, hl } => {
                if nh.len() != hl.len() {
                    return Err(Error::validation("NH and HL rate lists differ in length"));
                }
                let unit = |p: &T| *p >= T::zero() && *p <= T::one();
                if !nh.iter().chain(hl.iter()).all(unit) {
                    return Err(Error::validation(
                        "correct-response rates must lie in [0, 1]",
                    ));
                }
            }
        }
        Ok(())
    }

    fn p(&self, group: Group, mean_hl: T, item: usize) -> T {
        match self {
            ResponseModel::Psychometric { delta_d, params } => {
                p_correct(delta_d[item], mean_hl, params)
            }
            ResponseModel::Measured { nh, hl } => match group {
                Group::NH => nh[item],
                Group::HI => hl[item],
            },
        }
    }
}

fn participant_audiogram<R: Rng>(
    group: Group,
    base: &Audiogram,
    half_width: f64,
    rng: &mut R,
) -> Result<Audiogram> {
    let thresholds: Vec<f64> = match group {
        Group::NH => vec![0.0; base.points().len()],
        Group::HI => base
            .points()
            .iter()
            .map(|&(_, t)| {
                let d = if half_width > 0.0 {
                    rng.gen_range(-half_width..=half_width)
                } else {
                    0.0
                };
                (t + d).clamp(0.0, MAX_THRESHOLD_DB_HL)
            })
            .collect(),
    };
    base.with_thresholds(format!("{}-{}", base.name(), group.name()), &thresholds)
}

/// Monte Carlo cohort: each participant answers a random item subset with Bernoulli
/// trials at the model's probability. Reproducible from `cfg.seed`.
pub fn simulate_cohort<T: Scalar>(
    model: ResponseModel<'_, T>,
    base_hi: &Audiogram,
    cfg: &CohortConfig,
) -> Result<CohortRun<T>> {
    model.validate()?;
    let n_items = model.n_items();
    if cfg.n_nh == 0 || cfg.n_hi == 0 || cfg.subset_size == 0 {
        return Err(Error::validation("cohort counts must be at least 1"));
    }
    if cfg.subset_size > n_items {
        return Err(Error::validation(format!(
            "subset of {} items requested from a battery of {n_items}",
            cfg.subset_size
        )));
    }
    if !(cfg.perturbation_db >= 0.0) {
        return Err(Error::validation("perturbation must be non-negative"));
    }

    let units: Vec<(Group, usize)> = (0..cfg.n_nh)
        .map(|i| (Group::NH, i))
        .chain((0..cfg.n_hi).map(|i| (Group::HI, i)))
        .collect();
    let participants = units
        .par_iter()
        .map(|&(group, i)| {
            let unit_seed = seed::derive(cfg.seed, &[group as u64, i as u64]);
            let mut rng = seed::rng(unit_seed);
            let item_subset = sample(&mut rng, n_items, cfg.subset_size).into_vec();
            let audiogram = participant_audiogram(group, base_hi, cfg.perturbation_db, &mut rng)?;
            let mean_hl = T::of(audiogram.mean_threshold());
            let correct = item_subset
                .iter()
                .filter(|&&item| {
                    let p = model.p(group, mean_hl, item).to_f64_lossy();
                    rng.gen::<f64>() < p
                })
                .count();
            Ok(SimulatedParticipant {
                group,
                audiogram,
                seed: unit_seed,
                item_subset,
                score: T::of(100.0 * correct as f64 / cfg.subset_size as f64),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let scores = |g: Group| -> Vec<T> {
        participants
            .iter()
            .filter(|p| p.group == g)
            .map(|p| p.score)
            .collect()
    };
    let (nh, hi) = (scores(Group::NH), scores(Group::HI));
    let roc = roc_analysis(&nh, &hi, T::of(cfg.fixed_threshold))?;
    let mean = |v: &[T]| v.iter().fold(T::zero(), |a, &b| a + b) / T::of(v.len() as f64);
    Ok(CohortRun {
        nh_mean: mean(&nh),
        hi_mean: mean(&hi),
        participants,
        roc: roc.points,
        auc: roc.auc,
        youden_j: roc.youden_j,
        youden: roc.youden,
        fixed: roc.fixed,
        config: cfg.clone(),
        params: match model {
            ResponseModel::Psychometric { params, .. } => Some(*params),
            ResponseModel::Measured { .. } => None,
        },
        seed: cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(delta: &[f64], params: &PsychometricParams, cfg: &CohortConfig) -> CohortRun<f64> {
        simulate_cohort(
            ResponseModel::Psychometric {
                delta_d: delta,
                params,
            },
            &Audiogram::moderate(),
            cfg,
        )
        .unwrap()
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let delta = vec![2.0; 60];
        let p = PsychometricParams::default();
        let cfg = CohortConfig {
            seed: 9,
            ..Default::default()
        };
        let a = run(&delta, &p, &cfg);
        let b = run(&delta, &p, &cfg);
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let c = run(&delta, &p, &CohortConfig { seed: 10, ..cfg });
        assert_ne!(a.to_json().unwrap(), c.to_json().unwrap());
    }

    #[test]
    fn certain_responses_score_full() {
        let one = [1.0];
        let cfg = CohortConfig {
            n_nh: 1,
            n_hi: 1,
            subset_size: 1,
            ..Default::default()
        };
        let r = simulate_cohort(
            ResponseModel::Measured { nh: &one, hl: &one },
            &Audiogram::moderate(),
            &cfg,
        )
        .unwrap();
        assert_eq!(r.scores(Group::NH), vec![100.0]);
        assert_eq!(r.scores(Group::HI), vec![100.0]);
    }

    #[test]
    fn impaired_audiograms_stay_in_band() {
        let delta = vec![1.0; 10];
        let r = run(
            &delta,
            &PsychometricParams::default(),
            &CohortConfig {
                subset_size: 10,
                ..Default::default()
            },
        );
        let base = Audiogram::moderate();
        for p in &r.participants {
            for (i, &(f, t)) in p.audiogram.points().iter().enumerate() {
                assert_eq!(f, base.points()[i].0);
                match p.group {
                    Group::NH => assert_eq!(t, 0.0),
                    Group::HI => {
                        assert!((t - base.points()[i].1).abs() <= 10.0 + 1e-12);
                        assert!(t >= 0.0);
                    }
                }
            }
            let mut s = p.item_subset.clone();
            s.sort_unstable();
            s.dedup();
            assert_eq!(s.len(), 10);
        }
    }

    #[test]
    fn oversized_subset_rejected() {
        let delta = vec![1.0; 5];
        let err = simulate_cohort(
            ResponseModel::Psychometric {
                delta_d: &delta,
                params: &PsychometricParams::default(),
            },
            &Audiogram::moderate(),
            &CohortConfig::default(),
        );
        assert!(matches!(err, Err(Error::Validation(_))));
    }
}
