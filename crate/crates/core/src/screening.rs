//! Data cleansing: accept or reject submissions and summarize the outcome.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::builder::KeyRow;
use crate::error::{Error, Result};
use crate::model::{StudyConfig, Submission};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RejectReason {
    GoldFailed,
    DeviceCheckFailed,
    EnvironmentFailed,
    HearingFailed,
    Incomplete,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::GoldFailed => "GoldFailed",
            Self::DeviceCheckFailed => "DeviceCheckFailed",
            Self::EnvironmentFailed => "EnvironmentFailed",
            Self::HearingFailed => "HearingFailed",
            Self::Incomplete => "Incomplete",
        }
    }
}

impl std::str::FromStr for RejectReason {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "GoldFailed" => Self::GoldFailed,
            "DeviceCheckFailed" => Self::DeviceCheckFailed,
            "EnvironmentFailed" => Self::EnvironmentFailed,
            "HearingFailed" => Self::HearingFailed,
            "Incomplete" => Self::Incomplete,
            other => return Err(Error::Input(format!("unknown reject reason {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreeningOutcome {
    pub worker_id: String,
    pub assignment_id: String,
    pub accepted: bool,
    pub reasons: Vec<RejectReason>,
}

/// A quiz scored against fixed expected tokens (hearing, environment, device check).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerKeyTest {
    pub test_id: String,
    pub items: Vec<(String, String)>,
    pub pass_threshold: f64,
}

impl AnswerKeyTest {
    pub fn new(test_id: impl Into<String>, items: Vec<(String, String)>, pass_threshold: f64) -> Result<Self> {
        let test_id = test_id.into();
        if items.is_empty() {
            return Err(Error::Input(format!("answer key {test_id} has no items")));
        }
        if !(0.0..=1.0).contains(&pass_threshold) {
            return Err(Error::Input(format!("answer key {test_id}: threshold outside [0, 1]")));
        }
        Ok(Self {
            test_id,
            items,
            pass_threshold,
        })
    }
}

/// Fraction of exactly matching answers (whitespace-trimmed); missing answers count as wrong.
pub fn score_answer_key_test(answers: &BTreeMap<String, String>, key: &AnswerKeyTest) -> (f64, bool) {
    let correct = key
        .items
        .iter()
        .filter(|(id, expected)| answers.get(id).is_some_and(|a| a.trim() == expected.trim()))
        .count();
    let fraction = correct as f64 / key.items.len() as f64;
    (fraction, fraction >= key.pass_threshold)
}

pub fn validate_gold(answer: i32, expected: i32, tolerance: i32) -> bool {
    (answer - expected).abs() <= tolerance
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialKey {
    pub condition_id: String,
    pub is_gold: bool,
    pub expected_gold_answer: Option<i32>,
}

/// Everything screening needs to know besides the submission itself.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreeningKeys {
    pub device: AnswerKeyTest,
    pub environment: AnswerKeyTest,
    pub hearing: Option<AnswerKeyTest>,
    pub trials: BTreeMap<String, TrialKey>,
    /// Number of items (golds included) per section.
    pub section_sizes: BTreeMap<String, usize>,
}

/// One row of the qualification answer-key CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualificationKeyRow {
    /// `device`, `environment` or `hearing`.
    pub test_id: String,
    pub item_id: String,
    pub expected: String,
    /// Optional per-test override of the configured threshold.
    #[serde(default)]
    pub pass_threshold: Option<f64>,
}

impl ScreeningKeys {
    /// Assembles keys from the qualification key rows and the manifest answer key.
    /// Thresholds default to the config (device check: every item must be correct).
    pub fn from_rows(qualification: &[QualificationKeyRow], manifest_key: &[KeyRow], config: &StudyConfig) -> Result<Self> {
        let mut grouped: BTreeMap<&str, (Vec<(String, String)>, Option<f64>)> = BTreeMap::new();
        for row in qualification {
            let entry = grouped.entry(row.test_id.as_str()).or_default();
            entry.0.push((row.item_id.clone(), row.expected.clone()));
            if let Some(t) = row.pass_threshold {
                if entry.1.is_some_and(|prev| prev != t) {
                    return Err(Error::Input(format!("conflicting thresholds for test {}", row.test_id)));
                }
                entry.1 = Some(t);
            }
        }
        if let Some(unknown) = grouped.keys().find(|k| !["device", "environment", "hearing"].contains(k)) {
            return Err(Error::Input(format!("unknown qualification test {unknown:?}")));
        }
        let mut take = |id: &str, default: f64| -> Result<Option<AnswerKeyTest>> {
            grouped
                .remove(id)
                .map(|(items, t)| AnswerKeyTest::new(id, items, t.unwrap_or(default)))
                .transpose()
        };
        let device = take("device", 1.0)?.ok_or_else(|| Error::Input("no device check items in key".into()))?;
        let environment = take("environment", config.environment_pass_threshold)?
            .ok_or_else(|| Error::Input("no environment test items in key".into()))?;
        let hearing = take("hearing", config.hearing_pass_threshold)?;

        let mut trials = BTreeMap::new();
        let mut section_sizes: BTreeMap<String, usize> = BTreeMap::new();
        for k in manifest_key {
            let entry = TrialKey {
                condition_id: k.condition_id.clone(),
                is_gold: k.is_gold,
                expected_gold_answer: k.expected_gold_answer,
            };
            if let Some(prev) = trials.insert(k.trial_id.clone(), entry.clone()) {
                if prev != entry {
                    return Err(Error::Input(format!("trial {} has inconsistent key rows", k.trial_id)));
                }
            }
            *section_sizes.entry(k.section_id.clone()).or_default() += 1;
        }
        Ok(Self {
            device,
            environment,
            hearing,
            trials,
            section_sizes,
        })
    }
}

/// Applies every screening rule and collects all failures.
pub fn screen_submission(submission: &Submission, keys: &ScreeningKeys, config: &StudyConfig) -> Result<ScreeningOutcome> {
    submission.check_structure()?;
    let scale = &config.scale;
    for vote in &submission.votes {
        match keys.trials.get(&vote.trial_id) {
            None => return Err(Error::Input(format!("vote references unknown trial {}", vote.trial_id))),
            Some(k) if k.is_gold => {
                return Err(Error::Input(format!("gold trial {} recorded as a vote", vote.trial_id)))
            }
            _ => {}
        }
        if !scale.contains(vote.raw_rating) {
            return Err(Error::Input(format!("rating {} outside scale on trial {}", vote.raw_rating, vote.trial_id)));
        }
        if scale.kind() == crate::model::ScaleKind::Ccr && vote.presentation_order.is_none() {
            return Err(Error::Input(format!("CCR vote on trial {} lacks presentation order", vote.trial_id)));
        }
    }

    let mut reasons = Vec::new();
    if !score_answer_key_test(&submission.device_check_answers, &keys.device).1 {
        reasons.push(RejectReason::DeviceCheckFailed);
    }
    if !score_answer_key_test(&submission.environment_test_answers, &keys.environment).1 {
        reasons.push(RejectReason::EnvironmentFailed);
    }
    if let (Some(key), Some(answers)) = (&keys.hearing, &submission.hearing_test_answers) {
        if !score_answer_key_test(answers, key).1 {
            reasons.push(RejectReason::HearingFailed);
        }
    }
    let mut gold_failed = false;
    for gold in &submission.gold_answers {
        let key = keys
            .trials
            .get(&gold.trial_id)
            .filter(|k| k.is_gold)
            .ok_or_else(|| Error::Input(format!("gold answer for non-gold trial {}", gold.trial_id)))?;
        let expected = key
            .expected_gold_answer
            .ok_or_else(|| Error::Input(format!("gold trial {} has no expected answer", gold.trial_id)))?;
        if !validate_gold(gold.rating, expected, config.gold_tolerance) {
            gold_failed = true;
        }
    }
    if gold_failed {
        reasons.push(RejectReason::GoldFailed);
    }

    let answered = submission.votes.len() + submission.gold_answers.len();
    let incomplete = match &submission.section_id {
        Some(section) => {
            let expected = keys
                .section_sizes
                .get(section)
                .ok_or_else(|| Error::Input(format!("unknown section {section}")))?;
            answered < *expected
        }
        None => submission.votes.is_empty(),
    } || submission.votes.iter().any(|v| !v.listen_complete);
    if incomplete {
        reasons.push(RejectReason::Incomplete);
    }

    Ok(ScreeningOutcome {
        worker_id: submission.worker_id.clone(),
        assignment_id: submission.assignment_id.clone(),
        accepted: reasons.is_empty(),
        reasons,
    })
}

/// Partial screening counts; `merge` is associative so batches can be tallied independently.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScreeningTally {
    pub total: usize,
    pub accepted: usize,
    pub reason_counts: BTreeMap<RejectReason, usize>,
    pub votes_per_condition: BTreeMap<String, usize>,
}

impl ScreeningTally {
    pub fn add(&mut self, outcome: &ScreeningOutcome, submission: &Submission, keys: &ScreeningKeys) {
        self.total += 1;
        for r in &outcome.reasons {
            *self.reason_counts.entry(*r).or_default() += 1;
        }
        if outcome.accepted {
            self.accepted += 1;
            for v in &submission.votes {
                if let Some(k) = keys.trials.get(&v.trial_id) {
                    *self.votes_per_condition.entry(k.condition_id.clone()).or_default() += 1;
                }
            }
        }
    }

    pub fn merge(mut self, other: Self) -> Self {
        self.total += other.total;
        self.accepted += other.accepted;
        for (r, c) in other.reason_counts {
            *self.reason_counts.entry(r).or_default() += c;
        }
        for (cond, c) in other.votes_per_condition {
            *self.votes_per_condition.entry(cond).or_default() += c;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningSummary {
    pub total: usize,
    pub accepted: usize,
    pub acceptance_rate: f64,
    pub reason_counts: BTreeMap<RejectReason, usize>,
    pub votes_per_condition: BTreeMap<String, usize>,
    pub mean_votes_per_condition: f64,
    pub sd_votes_per_condition: f64,
}

impl ScreeningSummary {
    /// Finalizes a tally. `conditions` lists every scored condition so that
    /// conditions without accepted votes count as zero.
    pub fn from_tally<'a>(tally: ScreeningTally, conditions: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        if tally.total == 0 {
            return Err(Error::Usage("no screening outcomes to summarize".into()));
        }
        let mut votes = tally.votes_per_condition;
        for c in conditions {
            votes.entry(c.to_string()).or_default();
        }
        let counts: Vec<f64> = votes.values().map(|&c| c as f64).collect();
        let (mean, sd) = if counts.is_empty() {
            (0.0, 0.0)
        } else {
            let n = counts.len() as f64;
            let mean = counts.iter().sum::<f64>() / n;
            let sd = if counts.len() > 1 {
                (counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            (mean, sd)
        };
        Ok(Self {
            total: tally.total,
            accepted: tally.accepted,
            acceptance_rate: tally.accepted as f64 / tally.total as f64,
            reason_counts: tally.reason_counts,
            votes_per_condition: votes,
            mean_votes_per_condition: mean,
            sd_votes_per_condition: sd,
        })
    }
}

/// Summary over a batch of screened submissions (outcomes and submissions
/// aligned by position).
pub fn screening_summary(outcomes: &[ScreeningOutcome], submissions: &[Submission], keys: &ScreeningKeys) -> Result<ScreeningSummary> {
    if outcomes.len() != submissions.len() {
        return Err(Error::Usage("outcomes and submissions differ in length".into()));
    }
    let mut tally = ScreeningTally::default();
    for (o, s) in outcomes.iter().zip(submissions) {
        tally.add(o, s, keys);
    }
    let conditions: BTreeSet<&str> = keys
        .trials
        .values()
        .filter(|k| !k.is_gold)
        .map(|k| k.condition_id.as_str())
        .collect();
    ScreeningSummary::from_tally(tally, conditions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GoldAnswer, PresentationOrder, VoteRecord};

    fn key(n: usize, threshold: f64) -> AnswerKeyTest {
        AnswerKeyTest::new(
            "hearing",
            (0..n).map(|i| (format!("i{i}"), format!("{}", 100 + i))).collect(),
            threshold,
        )
        .unwrap()
    }

    fn answers(pairs: &[(usize, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(i, a)| (format!("i{i}"), a.to_string())).collect()
    }

    #[test]
    fn answer_key_scoring() {
        let all: Vec<(usize, String)> = (0..6).map(|i| (i, format!("{}", 100 + i))).collect();
        let all: BTreeMap<String, String> = all.into_iter().map(|(i, a)| (format!("i{i}"), a)).collect();
        assert_eq!(score_answer_key_test(&all, &key(6, 0.8)), (1.0, true));
        assert_eq!(score_answer_key_test(&BTreeMap::new(), &key(6, 0.8)), (0.0, false));

        let four = answers(&[(0, "100"), (1, "101"), (2, "102"), (3, "103"), (4, "999")]);
        assert_eq!(score_answer_key_test(&four, &key(5, 0.8)), (0.8, true));
    }

    #[test]
    fn gold_tolerance() {
        assert!(validate_gold(0, 0, 1));
        assert!(!validate_gold(-3, 0, 1));
        assert!(validate_gold(1, 0, 1));
        assert!(!validate_gold(1, 0, 0));
    }

    fn keys() -> ScreeningKeys {
        let mut trials = BTreeMap::new();
        for i in 0..10 {
            trials.insert(
                format!("t{i}"),
                TrialKey {
                    condition_id: format!("C{}", i % 2),
                    is_gold: false,
                    expected_gold_answer: None,
                },
            );
        }
        trials.insert(
            "g0".into(),
            TrialKey {
                condition_id: "REF".into(),
                is_gold: true,
                expected_gold_answer: Some(0),
            },
        );
        ScreeningKeys {
            device: AnswerKeyTest::new("device", vec![("lr".into(), "left-right".into())], 1.0).unwrap(),
            environment: AnswerKeyTest::new(
                "environment",
                (0..5).map(|i| (format!("e{i}"), "A".to_string())).collect(),
                0.8,
            )
            .unwrap(),
            hearing: Some(key(6, 5.0 / 6.0)),
            trials,
            section_sizes: BTreeMap::from([("S0001".to_string(), 11)]),
        }
    }

    fn good_submission() -> Submission {
        Submission {
            worker_id: "w".into(),
            assignment_id: "a".into(),
            section_id: Some("S0001".into()),
            session_timestamp: "2021-01-01T00:00:00Z".into(),
            last_training_timestamp: None,
            training_answers: vec![],
            device_check_answers: BTreeMap::from([("lr".into(), "left-right".into())]),
            hearing_test_answers: Some((0..6).map(|i| (format!("i{i}"), format!("{}", 100 + i))).collect()),
            environment_test_answers: (0..5).map(|i| (format!("e{i}"), "A".to_string())).collect(),
            gold_answers: vec![GoldAnswer {
                trial_id: "g0".into(),
                rating: 0,
            }],
            votes: (0..10)
                .map(|i| VoteRecord {
                    trial_id: format!("t{i}"),
                    raw_rating: -1,
                    presentation_order: Some(PresentationOrder::ReferenceFirst),
                    listen_complete: true,
                    timestamp: None,
                })
                .collect(),
        }
    }

    #[test]
    fn accepted_when_everything_passes() {
        let o = screen_submission(&good_submission(), &keys(), &StudyConfig::default()).unwrap();
        assert!(o.accepted);
        assert!(o.reasons.is_empty());
    }

    #[test]
    fn gold_failure_alone() {
        let mut s = good_submission();
        s.gold_answers[0].rating = -2;
        let o = screen_submission(&s, &keys(), &StudyConfig::default()).unwrap();
        assert!(!o.accepted);
        assert_eq!(o.reasons, vec![RejectReason::GoldFailed]);
    }

    #[test]
    fn all_reasons_collected() {
        let mut s = good_submission();
        s.gold_answers[0].rating = 3;
        s.device_check_answers.clear();
        s.environment_test_answers.clear();
        s.hearing_test_answers = Some(BTreeMap::new());
        s.votes.pop();
        let o = screen_submission(&s, &keys(), &StudyConfig::default()).unwrap();
        assert_eq!(
            o.reasons,
            vec![
                RejectReason::DeviceCheckFailed,
                RejectReason::EnvironmentFailed,
                RejectReason::HearingFailed,
                RejectReason::GoldFailed,
                RejectReason::Incomplete
            ]
        );
    }

    #[test]
    fn unknown_trial_is_input_error() {
        let mut s = good_submission();
        s.votes[0].trial_id = "nope".into();
        assert!(matches!(
            screen_submission(&s, &keys(), &StudyConfig::default()),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn hearing_skipped_when_not_taken() {
        let mut s = good_submission();
        s.hearing_test_answers = None;
        assert!(screen_submission(&s, &keys(), &StudyConfig::default()).unwrap().accepted);
    }

    #[test]
    fn summary_counts() {
        let k = keys();
        let config = StudyConfig::default();
        let good = good_submission();
        let mut bad = good_submission();
        bad.environment_test_answers.clear();
        let subs = vec![good.clone(), bad, good];
        let outcomes: Vec<_> = subs.iter().map(|s| screen_submission(s, &k, &config).unwrap()).collect();
        let summary = screening_summary(&outcomes, &subs, &k).unwrap();
        assert_eq!(summary.accepted, 2);
        assert!((summary.acceptance_rate - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(summary.reason_counts[&RejectReason::EnvironmentFailed], 1);
        assert_eq!(summary.votes_per_condition["C0"], 10);
        assert_eq!(summary.mean_votes_per_condition, 10.0);
        assert_eq!(summary.sd_votes_per_condition, 0.0);
    }

    #[test]
    fn tally_merge_is_associative() {
        let k = keys();
        let config = StudyConfig::default();
        let mut subs = vec![good_submission(); 4];
        subs[1].gold_answers[0].rating = 3;
        subs[3].device_check_answers.clear();
        let tallies: Vec<ScreeningTally> = subs
            .iter()
            .map(|s| {
                let mut t = ScreeningTally::default();
                t.add(&screen_submission(s, &k, &config).unwrap(), s, &k);
                t
            })
            .collect();
        let left = tallies[0].clone().merge(tallies[1].clone()).merge(tallies[2].clone().merge(tallies[3].clone()));
        let right = tallies.into_iter().reduce(ScreeningTally::merge).unwrap();
        assert_eq!(left, right);
    }

    #[test]
    fn all_accepted_has_no_reasons() {
        let k = keys();
        let subs = vec![good_submission(); 3];
        let outcomes: Vec<_> = subs
            .iter()
            .map(|s| screen_submission(s, &k, &StudyConfig::default()).unwrap())
            .collect();
        let summary = screening_summary(&outcomes, &subs, &k).unwrap();
        assert_eq!(summary.acceptance_rate, 1.0);
        assert!(summary.reason_counts.is_empty());
    }
}
