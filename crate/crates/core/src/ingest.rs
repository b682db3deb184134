//! Submission payloads as posted by the rating page, and their resolution
//! against the hidden answer key.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::builder::KeyRow;
use crate::error::{Error, Result};
use crate::model::{parse_timestamp, GoldAnswer, RatingScale, Submission, TrainingAnswer, VoteRecord};

fn yes() -> bool {
    true
}

/// One rating given on the page, keyed by its manifest position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingEntry {
    pub item_index: usize,
    pub rating: i32,
    #[serde(default = "yes")]
    pub listen_complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    #[serde(default)]
    pub replay_count: u32,
}

/// The wire format of one assignment. It only knows worker-visible manifest
/// columns; trial identities and orders come from the answer key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmissionPayload {
    pub worker_id: String,
    pub assignment_id: String,
    pub section_id: String,
    pub session_timestamp: String,
    #[serde(default)]
    pub last_training_timestamp: Option<String>,
    #[serde(default)]
    pub training_answers: Vec<TrainingAnswer>,
    #[serde(default)]
    pub device_check_answers: BTreeMap<String, String>,
    #[serde(default)]
    pub hearing_test_answers: Option<BTreeMap<String, String>>,
    #[serde(default)]
    pub environment_test_answers: BTreeMap<String, String>,
    pub ratings: Vec<RatingEntry>,
    /// Items whose media failed to load and could not be rated.
    #[serde(default)]
    pub unratable: Vec<usize>,
}

/// Structural ingestion check. `section_items` maps section ids to item counts
/// (from the worker manifest); it catches indices outside the section.
pub fn validate_payload(
    payload: &SubmissionPayload,
    scale: &RatingScale,
    section_items: &BTreeMap<String, usize>,
) -> Result<()> {
    if payload.worker_id.is_empty() || payload.assignment_id.is_empty() {
        return Err(Error::Input("worker_id and assignment_id must be non-empty".into()));
    }
    parse_timestamp("session_timestamp", &payload.session_timestamp)?;
    if let Some(ts) = &payload.last_training_timestamp {
        parse_timestamp("last_training_timestamp", ts)?;
    }
    let size = *section_items
        .get(&payload.section_id)
        .ok_or_else(|| Error::Input(format!("unknown section {}", payload.section_id)))?;
    let mut seen = BTreeSet::new();
    for r in &payload.ratings {
        if r.item_index >= size {
            return Err(Error::Input(format!(
                "item_index {} outside section {} ({size} items)",
                r.item_index, payload.section_id
            )));
        }
        if !seen.insert(r.item_index) {
            return Err(Error::Input(format!("item {} rated twice", r.item_index)));
        }
        if !scale.contains(r.rating) {
            return Err(Error::Input(format!("rating {} outside scale", r.rating)));
        }
        if let Some(ts) = &r.timestamp {
            parse_timestamp("ratings.timestamp", ts)?;
        }
    }
    for t in &payload.training_answers {
        if !scale.contains(t.rating) {
            return Err(Error::Input(format!("training rating {} outside scale", t.rating)));
        }
    }
    Ok(())
}

/// Joins a payload with the answer key: gold items become gold answers, the
/// rest become votes carrying their hidden presentation order.
pub fn resolve_payload(payload: &SubmissionPayload, key: &[KeyRow]) -> Result<Submission> {
    let items: BTreeMap<usize, &KeyRow> = key
        .iter()
        .filter(|k| k.section_id == payload.section_id)
        .map(|k| (k.item_index, k))
        .collect();
    if items.is_empty() {
        return Err(Error::Input(format!("unknown section {}", payload.section_id)));
    }
    let mut votes = Vec::new();
    let mut gold_answers = Vec::new();
    for r in &payload.ratings {
        let k = items.get(&r.item_index).ok_or_else(|| {
            Error::Input(format!(
                "section {} has no item {}",
                payload.section_id, r.item_index
            ))
        })?;
        if k.is_gold {
            gold_answers.push(GoldAnswer {
                trial_id: k.trial_id.clone(),
                rating: r.rating,
            });
        } else {
            votes.push(VoteRecord {
                trial_id: k.trial_id.clone(),
                raw_rating: r.rating,
                presentation_order: Some(k.order),
                listen_complete: r.listen_complete,
                timestamp: r.timestamp.clone(),
            });
        }
    }
    Ok(Submission {
        worker_id: payload.worker_id.clone(),
        assignment_id: payload.assignment_id.clone(),
        section_id: Some(payload.section_id.clone()),
        session_timestamp: payload.session_timestamp.clone(),
        last_training_timestamp: payload.last_training_timestamp.clone(),
        training_answers: payload.training_answers.clone(),
        device_check_answers: payload.device_check_answers.clone(),
        hearing_test_answers: payload.hearing_test_answers.clone(),
        environment_test_answers: payload.environment_test_answers.clone(),
        gold_answers,
        votes,
    })
}

/// Whether the training page must show corrective feedback for an answer.
pub fn training_feedback_needed(answer: i32, expected: i32, tolerance: i32) -> bool {
    (answer - expected).abs() > tolerance
}

/// Reads a JSON-lines batch where each line is either a resolved
/// [`Submission`] or a raw page payload (recognized by its `ratings` field),
/// resolving payloads through the answer key.
pub fn read_submissions_jsonl(text: &str, key: &[KeyRow]) -> Result<Vec<Submission>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = |e: serde_json::Error| Error::Input(format!("line {}: {e}", i + 1));
        let value: serde_json::Value = serde_json::from_str(line).map_err(at)?;
        let sub = if value.get("ratings").is_some() {
            let payload: SubmissionPayload = serde_json::from_value(value).map_err(at)?;
            resolve_payload(&payload, key)
                .map_err(|e| Error::Input(format!("line {}: {e}", i + 1)))?
        } else {
            serde_json::from_value(value).map_err(at)?
        };
        out.push(sub);
    }
    Ok(out)
}

/// Parses JSON lines, skipping blank lines. Errors carry the 1-based line number.
pub fn read_payloads_jsonl(text: &str) -> Result<Vec<SubmissionPayload>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Input(format!("line {}: {e}", i + 1)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PresentationOrder;

    fn key() -> Vec<KeyRow> {
        (0..3)
            .map(|i| KeyRow {
                section_id: "S0001".into(),
                item_index: i,
                trial_id: if i == 1 { "g0".into() } else { format!("t{i}") },
                condition_id: if i == 1 { "REF".into() } else { "C1".into() },
                order: if i == 2 {
                    PresentationOrder::ProcessedFirst
                } else {
                    PresentationOrder::ReferenceFirst
                },
                is_gold: i == 1,
                expected_gold_answer: (i == 1).then_some(0),
            })
            .collect()
    }

    fn payload() -> SubmissionPayload {
        SubmissionPayload {
            worker_id: "w1".into(),
            assignment_id: "a1".into(),
            section_id: "S0001".into(),
            session_timestamp: "2021-02-01T10:00:00Z".into(),
            last_training_timestamp: None,
            training_answers: vec![],
            device_check_answers: BTreeMap::new(),
            hearing_test_answers: None,
            environment_test_answers: BTreeMap::new(),
            ratings: (0..3)
                .map(|i| RatingEntry {
                    item_index: i,
                    rating: i as i32 - 1,
                    listen_complete: true,
                    timestamp: None,
                    replay_count: 0,
                })
                .collect(),
            unratable: vec![],
        }
    }

    #[test]
    fn resolves_gold_and_orders() {
        let s = resolve_payload(&payload(), &key()).unwrap();
        assert_eq!(s.gold_answers, vec![GoldAnswer { trial_id: "g0".into(), rating: 0 }]);
        assert_eq!(s.votes.len(), 2);
        assert_eq!(s.votes[1].presentation_order, Some(PresentationOrder::ProcessedFirst));
        assert!(s.check_structure().is_ok());
    }

    #[test]
    fn validation_catches_structure_problems() {
        let sizes = BTreeMap::from([("S0001".to_string(), 3)]);
        let scale = RatingScale::ccr();
        assert!(validate_payload(&payload(), &scale, &sizes).is_ok());

        let mut p = payload();
        p.ratings[0].rating = 4;
        assert!(validate_payload(&p, &scale, &sizes).is_err());

        let mut p = payload();
        p.ratings[1].item_index = 0;
        assert!(validate_payload(&p, &scale, &sizes).is_err());

        let mut p = payload();
        p.session_timestamp = "bad".into();
        let err = validate_payload(&p, &scale, &sizes).unwrap_err().to_string();
        assert!(err.contains("session_timestamp"));
    }

    #[test]
    fn feedback_rule_exhaustive() {
        for answer in -3..=3 {
            assert_eq!(training_feedback_needed(answer, 0, 1), !(-1..=1).contains(&answer));
        }
        assert!(!training_feedback_needed(2, 2, 0));
        assert!(training_feedback_needed(1, 2, 0));
    }

    #[test]
    fn mixed_jsonl_batch() {
        let p = serde_json::to_string(&payload()).unwrap();
        let resolved = resolve_payload(&payload(), &key()).unwrap();
        let s = serde_json::to_string(&resolved).unwrap();
        let subs = read_submissions_jsonl(&format!("{p}\n{s}\n"), &key()).unwrap();
        assert_eq!(subs[0], subs[1]);
    }

    #[test]
    fn jsonl_reports_line_numbers() {
        let good = serde_json::to_string(&payload()).unwrap();
        let text = format!("{good}\n\n{{broken\n");
        let err = read_payloads_jsonl(&text).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        assert_eq!(read_payloads_jsonl(&format!("{good}\n{good}\n")).unwrap().len(), 2);
    }
}
