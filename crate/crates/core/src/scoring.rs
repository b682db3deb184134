//! Vote correction, per-condition aggregation and SOS fitting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dist;
use crate::error::{Error, Result};
use crate::model::{ConditionScore, PresentationOrder, RatingScale};

/// A vote oriented as "processed relative to reference".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectedVote {
    pub trial_id: String,
    pub condition_id: String,
    pub value: i32,
}

/// Orients a raw CCR vote so that it always rates the processed clip against
/// the reference. ACR votes have no order and cannot be corrected.
pub fn correct_vote(raw: i32, order: Option<PresentationOrder>) -> Result<i32> {
    match order {
        Some(PresentationOrder::ReferenceFirst) => Ok(raw),
        Some(PresentationOrder::ProcessedFirst) => Ok(-raw),
        None => Err(Error::Usage("vote has no presentation order (ACR vote?)".into())),
    }
}

/// Running sums for mean and variance; merging partials is associative.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Moments {
    pub n: usize,
    pub sum: i64,
    pub sum_sq: i64,
}

impl Moments {
    pub fn push(&mut self, v: i32) {
        self.n += 1;
        self.sum += i64::from(v);
        self.sum_sq += i64::from(v) * i64::from(v);
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            n: self.n + other.n,
            sum: self.sum + other.sum,
            sum_sq: self.sum_sq + other.sum_sq,
        }
    }

    pub fn mean(&self) -> f64 {
        self.sum as f64 / self.n as f64
    }

    /// Sample standard deviation (n - 1 denominator); 0 for a single vote.
    pub fn sd(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        // n * Σv² - (Σv)² is exact in integers
        let n = self.n as i128;
        let num = n * i128::from(self.sum_sq) - i128::from(self.sum) * i128::from(self.sum);
        (num as f64 / (n * (n - 1)) as f64).sqrt()
    }

    pub fn ci95(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        ci95_half_width(self.sd(), self.n)
    }

    pub fn into_score(self, condition_id: impl Into<String>) -> ConditionScore {
        ConditionScore {
            condition_id: condition_id.into(),
            n: self.n,
            mean: self.mean(),
            sd: self.sd(),
            ci95: self.ci95(),
        }
    }
}

/// Half width of the Student-t 95% confidence interval of a mean.
pub fn ci95_half_width(sd: f64, n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    dist::t_quantile(0.975, (n - 1) as f64) * sd / (n as f64).sqrt()
}

/// Aggregates the (already corrected) votes of one condition.
pub fn aggregate_condition(condition_id: &str, votes: &[i32]) -> Result<ConditionScore> {
    if votes.is_empty() {
        return Err(Error::Input(format!("condition {condition_id} has no votes")));
    }
    let mut m = Moments::default();
    votes.iter().for_each(|&v| m.push(v));
    Ok(m.into_score(condition_id))
}

/// Condition scores for every condition present in `votes`, ordered by id.
pub fn score_conditions(votes: &[CorrectedVote]) -> Vec<ConditionScore> {
    let mut by_condition: BTreeMap<&str, Moments> = BTreeMap::new();
    for v in votes {
        by_condition.entry(&v.condition_id).or_default().push(v.value);
    }
    by_condition
        .into_iter()
        .map(|(id, m)| m.into_score(id))
        .collect()
}

/// Score of a single stimulus pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusScore {
    pub trial_id: String,
    pub condition_id: String,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub ci95: f64,
}

pub fn score_stimuli(votes: &[CorrectedVote]) -> Vec<StimulusScore> {
    let mut by_trial: BTreeMap<(&str, &str), Moments> = BTreeMap::new();
    for v in votes {
        by_trial
            .entry((&v.trial_id, &v.condition_id))
            .or_default()
            .push(v.value);
    }
    by_trial
        .into_iter()
        .map(|((trial, condition), m)| StimulusScore {
            trial_id: trial.to_string(),
            condition_id: condition.to_string(),
            n: m.n,
            mean: m.mean(),
            sd: m.sd(),
            ci95: m.ci95(),
        })
        .collect()
}

/// Reporting orientation of CMOS values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// Report corrected means as computed.
    #[default]
    Raw,
    /// Degradation-only studies: CMOS reported on [-3, 0], where 0 is the best
    /// quality. Means above 0 are reported as 0.
    Degradation,
}

impl Orientation {
    pub fn apply(self, score: &ConditionScore) -> ConditionScore {
        let mut out = score.clone();
        if self == Self::Degradation {
            out.mean = out.mean.min(0.0);
        }
        out
    }

    /// Scale bounds used for normalization under this orientation.
    pub fn bounds(self, scale: &RatingScale) -> (f64, f64) {
        match (self, scale.kind()) {
            (Self::Degradation, crate::model::ScaleKind::Ccr) => (f64::from(scale.min()), 0.0),
            _ => scale.bounds(),
        }
    }
}

/// Maps a mean score onto [0, 1] given the scale bounds.
pub fn normalize_mean_score(mean: f64, lower: f64, upper: f64) -> Result<f64> {
    if lower >= upper {
        return Err(Error::Usage(format!("invalid bounds ({lower}, {upper})")));
    }
    if !(lower..=upper).contains(&mean) {
        return Err(Error::Input(format!("mean {mean} outside [{lower}, {upper}]")));
    }
    Ok((mean - lower) / (upper - lower))
}

/// SOS hypothesis fit: `sd² = a (x - L)(H - x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SosFit {
    pub a: f64,
    pub lower: f64,
    pub upper: f64,
    /// Root mean squared residual of the variance model.
    pub rmse: f64,
    pub n: usize,
}

impl SosFit {
    /// Predicted standard deviation at mean score `x`.
    pub fn sos(&self, x: f64) -> f64 {
        (self.a * (x - self.lower) * (self.upper - x)).max(0.0).sqrt()
    }
}

/// Least-squares estimate of the SOS parameter from per-condition (mean, sd) pairs.
pub fn fit_sos(points: &[(f64, f64)], lower: f64, upper: f64) -> Result<SosFit> {
    if lower >= upper {
        return Err(Error::Usage(format!("invalid bounds ({lower}, {upper})")));
    }
    if let Some(&(x, s)) = points
        .iter()
        .find(|(x, s)| !(lower..=upper).contains(x) || !(*s >= 0.0))
    {
        return Err(Error::Input(format!("point ({x}, {s}) outside scale or with negative sd")));
    }
    let mut interior: Vec<f64> = points
        .iter()
        .map(|p| p.0)
        .filter(|&x| x > lower && x < upper)
        .collect();
    interior.sort_by(f64::total_cmp);
    interior.dedup();
    if interior.len() < 2 {
        return Err(Error::Undefined(
            "SOS fit needs at least two distinct means strictly inside the scale".into(),
        ));
    }

    let weight = |x: f64| (x - lower) * (upper - x);
    let (mut num, mut den) = (0.0, 0.0);
    for &(x, s) in points {
        let w = weight(x);
        num += w * s * s;
        den += w * w;
    }
    let a = (num / den).max(0.0);
    let ss: f64 = points
        .iter()
        .map(|&(x, s)| (s * s - a * weight(x)).powi(2))
        .sum();
    Ok(SosFit {
        a,
        lower,
        upper,
        rmse: (ss / points.len() as f64).sqrt(),
        n: points.len(),
    })
}
