//! Synthetic rater panels.
//!
//! Generative model: each rater carries a bias drawn once per run from
//! N(0, σ_b²); a vote is `clamp(round(true + offset + bias + ε))` with
//! ε ~ N(0, σ_v²), rounding half away from zero. Vote `j` of every condition
//! goes to rater `j mod n_raters`. Bias draws use stream 0 of the run seed and
//! rater `r` draws its noise from stream `r + 1`.

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ConditionScore, RatingScale};
use crate::scoring::Moments;
use crate::stats::{replication_summary, ReplicationSummary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterModel {
    pub sigma_b: f64,
    pub sigma_v: f64,
    /// Global shift added to every vote of the run.
    #[serde(default)]
    pub offset: f64,
    pub scale: RatingScale,
}

impl RaterModel {
    pub fn ccr(sigma_b: f64, sigma_v: f64) -> Self {
        Self {
            sigma_b,
            sigma_v,
            offset: 0.0,
            scale: RatingScale::ccr(),
        }
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    fn check(&self) -> Result<()> {
        if !(self.sigma_b >= 0.0 && self.sigma_v >= 0.0) || !self.offset.is_finite() {
            return Err(Error::Usage(format!(
                "rater model needs finite offset and sigma_b, sigma_v >= 0 (got {}, {})",
                self.sigma_b, self.sigma_v
            )));
        }
        Ok(())
    }

    /// Discretizes a latent score onto the scale.
    pub fn discretize(&self, latent: f64) -> i32 {
        (latent.round() as i64).clamp(i64::from(self.scale.min()), i64::from(self.scale.max())) as i32
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulatedVote {
    pub rater: usize,
    pub condition_id: String,
    pub value: i32,
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("sd checked non-negative")
}

pub fn simulate_votes(
    true_scores: &BTreeMap<String, f64>,
    n_raters: usize,
    votes_per_condition: usize,
    model: &RaterModel,
    seed: u64,
) -> Result<Vec<SimulatedVote>> {
    model.check()?;
    if n_raters == 0 {
        return Err(Error::Usage("need at least one rater".into()));
    }
    let (lo, hi) = model.scale.bounds();
    if let Some((id, v)) = true_scores.iter().find(|(_, v)| !(lo..=hi).contains(*v)) {
        return Err(Error::Input(format!("true score {v} of {id} outside [{lo}, {hi}]")));
    }

    let mut bias_rng = rng(seed, 0);
    let bias_dist = normal(model.sigma_b);
    let biases: Vec<f64> = (0..n_raters).map(|_| bias_dist.sample(&mut bias_rng)).collect();
    let mut rater_rngs: Vec<ChaCha8Rng> = (0..n_raters).map(|r| rng(seed, r as u64 + 1)).collect();
    let noise = normal(model.sigma_v);

    let mut votes = Vec::with_capacity(true_scores.len() * votes_per_condition);
    for (id, &truth) in true_scores {
        for j in 0..votes_per_condition {
            let r = j % n_raters;
            let latent = truth + model.offset + biases[r] + noise.sample(&mut rater_rngs[r]);
            votes.push(SimulatedVote {
                rater: r,
                condition_id: id.clone(),
                value: model.discretize(latent),
            });
        }
    }
    Ok(votes)
}

/// Per-condition scores of simulated votes, ordered by condition id.
pub fn score_simulated(votes: &[SimulatedVote]) -> Vec<ConditionScore> {
    let mut by: BTreeMap<&str, Moments> = BTreeMap::new();
    for v in votes {
        by.entry(&v.condition_id).or_default().push(v.value);
    }
    by.into_iter().map(|(id, m)| m.into_score(id)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRun {
    pub name: String,
    pub model: RaterModel,
    pub seed: u64,
    pub votes: Vec<SimulatedVote>,
    pub scores: Vec<ConditionScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationExperiment {
    pub runs: Vec<ReplicationRun>,
    pub summary: ReplicationSummary,
}

/// Seed of run `r`, split from the experiment seed.
pub fn run_seed(seed: u64, run: usize) -> u64 {
    rng(seed, 1_000 + run as u64).next_u64()
}

/// Simulates one independent panel per model and compares the runs.
pub fn run_replication_experiment(
    true_scores: &BTreeMap<String, f64>,
    models: &[RaterModel],
    n_raters: usize,
    votes_per_condition: usize,
    seed: u64,
) -> Result<ReplicationExperiment> {
    if models.len() < 2 {
        return Err(Error::Usage("a replication experiment needs at least two runs".into()));
    }
    let mut runs = Vec::with_capacity(models.len());
    for (r, model) in models.iter().enumerate() {
        let s = run_seed(seed, r);
        let votes = simulate_votes(true_scores, n_raters, votes_per_condition, model, s)?;
        let scores = score_simulated(&votes);
        runs.push(ReplicationRun {
            name: format!("run{}", r + 1),
            model: model.clone(),
            seed: s,
            votes,
            scores,
        });
    }
    let names: Vec<String> = runs.iter().map(|r| r.name.clone()).collect();
    let tables: Vec<BTreeMap<String, f64>> = runs
        .iter()
        .map(|r| r.scores.iter().map(|s| (s.condition_id.clone(), s.mean)).collect())
        .collect();
    let refs: Vec<&BTreeMap<String, f64>> = tables.iter().collect();
    let summary = replication_summary(&names, &refs, None)?;
    Ok(ReplicationExperiment { runs, summary })
}

/// `n` true scores evenly spaced over `[low, low + span]`.
pub fn evenly_spaced_scores(n: usize, low: f64, span: f64) -> BTreeMap<String, f64> {
    (0..n)
        .map(|i| {
            let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
            (format!("C{:02}", i + 1), low + span * t)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

    fn one(id: &str, v: f64) -> BTreeMap<String, f64> {
        BTreeMap::from([(id.to_string(), v)])
    }

    #[test]
    fn noiseless_votes_round() {
        let votes = simulate_votes(&one("C", -1.7), 5, 20, &RaterModel::ccr(0.0, 0.0), 3).unwrap();
        assert_eq!(votes.len(), 20);
        assert!(votes.iter().all(|v| v.value == -2));
        let votes = simulate_votes(&one("C", -0.5), 1, 3, &RaterModel::ccr(0.0, 0.0), 3).unwrap();
        assert!(votes.iter().all(|v| v.value == -1));
    }

    #[test]
    fn deterministic_per_seed() {
        let t = evenly_spaced_scores(5, -2.0, 1.5);
        let m = RaterModel::ccr(0.3, 0.7);
        let a = simulate_votes(&t, 10, 30, &m, 42).unwrap();
        assert_eq!(a, simulate_votes(&t, 10, 30, &m, 42).unwrap());
        assert_ne!(a, simulate_votes(&t, 10, 30, &m, 43).unwrap());
    }

    #[test]
    fn votes_stay_on_scale() {
        let t = one("C", 2.9);
        let votes = simulate_votes(&t, 3, 500, &RaterModel::ccr(1.0, 2.0), 1).unwrap();
        assert!(votes.iter().all(|v| (-3..=3).contains(&v.value)));
    }

    #[test]
    fn out_of_scale_truth_rejected() {
        assert!(simulate_votes(&one("C", 3.5), 1, 1, &RaterModel::ccr(0.0, 0.0), 0).is_err());
    }

    // Expected clamped, rounded vote of N(mu, sd²) over the 7 categories.
    fn expected_vote(mu: f64, sd: f64) -> f64 {
        let n = StatNormal::new(mu, sd).unwrap();
        (-3..=3)
            .map(|k| {
                let lo = if k == -3 { f64::NEG_INFINITY } else { k as f64 - 0.5 };
                let hi = if k == 3 { f64::INFINITY } else { k as f64 + 0.5 };
                k as f64 * (n.cdf(hi) - n.cdf(lo))
            })
            .sum()
    }

    #[test]
    fn large_sample_mean_matches_expectation() {
        for (mu, seed) in [(-1.3, 1), (0.25, 2), (2.6, 3)] {
            let votes = simulate_votes(&one("C", mu), 50, 10_000, &RaterModel::ccr(0.0, 0.7), seed).unwrap();
            let mean = votes.iter().map(|v| v.value as f64).sum::<f64>() / votes.len() as f64;
            assert!((mean - expected_vote(mu, 0.7)).abs() < 0.02, "{mu}: {mean}");
        }
    }

    #[test]
    fn condition_means_close_to_truth() {
        let t = evenly_spaced_scores(40, -2.0, 1.436);
        let votes = simulate_votes(&t, 60, 60, &RaterModel::ccr(0.0, 0.7), 9).unwrap();
        let scores = score_simulated(&votes);
        let close = scores
            .iter()
            .filter(|s| (s.mean - t[&s.condition_id]).abs() <= 0.25)
            .count();
        assert!(close as f64 >= 0.95 * 40.0, "{close}");
    }

    #[test]
    fn zero_noise_runs_agree_perfectly() {
        let t = evenly_spaced_scores(6, -2.0, 1.5);
        let models = vec![RaterModel::ccr(0.0, 0.0); 3];
        let exp = run_replication_experiment(&t, &models, 10, 10, 5).unwrap();
        assert!((exp.summary.icc.icc - 1.0).abs() < 1e-12);
        assert!(exp.summary.pairs.iter().all(|p| (p.pearson - 1.0).abs() < 1e-12));
    }
}
