//! CSV file formats exchanged between pipeline stages.
//!
//! Readers take a display name for the file so schema errors can say where
//! they came from.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::builder::{to_csv, KeyRow};
use crate::error::{Error, Result};
use crate::model::{ConditionScore, PresentationOrder, Submission};
use crate::screening::{QualificationKeyRow, RejectReason, ScreeningOutcome};

fn schema(file: &str, message: impl Into<String>) -> Error {
    Error::Schema {
        file: file.to_string(),
        message: message.into(),
    }
}

/// Checks the header for required columns, then deserializes every record.
fn read_rows<T: for<'de> Deserialize<'de>>(file: &str, text: &str, required: &[&str]) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| schema(file, e.to_string()))?.clone();
    for col in required {
        if !headers.iter().any(|h| h.trim() == *col) {
            return Err(schema(file, format!("missing column {col:?}")));
        }
    }
    reader
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| schema(file, format!("row {}: {e}", i + 2))))
        .collect()
}

/// Serializes rows with a header; `header` is written alone for an empty table.
pub fn write_table<T: Serialize>(rows: &[T], header: &str) -> Result<String> {
    if rows.is_empty() {
        return Ok(format!("{header}\n"));
    }
    to_csv(rows)
}

const SCORE_HEADER: &str = "condition_id,n,mean,sd,ci95";

pub fn write_scores(scores: &[ConditionScore]) -> Result<String> {
    write_table(scores, SCORE_HEADER)
}

pub fn read_scores(file: &str, text: &str) -> Result<Vec<ConditionScore>> {
    read_rows(file, text, &["condition_id", "n", "mean", "sd", "ci95"])
}

/// Reads a score table and keeps only condition → mean.
pub fn read_score_means(file: &str, text: &str) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for s in read_scores(file, text)? {
        if out.insert(s.condition_id.clone(), s.mean).is_some() {
            return Err(schema(file, format!("duplicate condition {}", s.condition_id)));
        }
    }
    Ok(out)
}

/// Reads a two-column `condition_id,<value_column>` table (true scores,
/// dimension scores, MOS columns). Falls back to `mean` when the column is
/// absent, so score tables can be used directly.
pub fn read_condition_values(file: &str, text: &str, value_column: &str) -> Result<BTreeMap<String, f64>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| schema(file, e.to_string()))?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let id_col = find("condition_id").ok_or_else(|| schema(file, "missing column \"condition_id\""))?;
    let val_col = find(value_column)
        .or_else(|| find("mean"))
        .ok_or_else(|| schema(file, format!("missing column {value_column:?}")))?;
    let mut out = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| schema(file, format!("row {}: {e}", i + 2)))?;
        let id = record.get(id_col).unwrap_or_default().trim().to_string();
        let raw = record.get(val_col).unwrap_or_default().trim();
        let value: f64 = raw.parse().map_err(|_| {
            schema(file, format!("row {}: column {:?} is not a number: {raw:?}", i + 2, &headers[val_col]))
        })?;
        if out.insert(id.clone(), value).is_some() {
            return Err(schema(file, format!("duplicate condition {id}")));
        }
    }
    Ok(out)
}

pub fn write_condition_values(values: &BTreeMap<String, f64>, value_column: &str) -> String {
    let mut s = format!("condition_id,{value_column}\n");
    for (k, v) in values {
        s.push_str(&format!("{k},{v}\n"));
    }
    s
}

/// One raw vote with its hidden order, as extracted from screened submissions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRow {
    pub worker_id: String,
    pub assignment_id: String,
    pub trial_id: String,
    pub condition_id: String,
    pub raw_rating: i32,
    /// Empty for ACR votes.
    pub order: Option<PresentationOrder>,
}

const VOTE_HEADER: &str = "worker_id,assignment_id,trial_id,condition_id,raw_rating,order";

pub fn write_votes(rows: &[VoteRow]) -> Result<String> {
    write_table(rows, VOTE_HEADER)
}

pub fn read_votes(file: &str, text: &str) -> Result<Vec<VoteRow>> {
    read_rows(file, text, &["worker_id", "assignment_id", "trial_id", "condition_id", "raw_rating", "order"])
}

/// Flattens submissions into vote rows; trials unknown to `condition_of` are an error.
pub fn vote_rows(
    submissions: &[Submission],
    condition_of: impl Fn(&str) -> Option<String>,
) -> Result<Vec<VoteRow>> {
    let mut rows = Vec::new();
    for s in submissions {
        for v in &s.votes {
            let condition_id = condition_of(&v.trial_id)
                .ok_or_else(|| Error::Input(format!("vote for unknown trial {}", v.trial_id)))?;
            rows.push(VoteRow {
                worker_id: s.worker_id.clone(),
                assignment_id: s.assignment_id.clone(),
                trial_id: v.trial_id.clone(),
                condition_id,
                raw_rating: v.raw_rating,
                order: v.presentation_order,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ScreenedRow {
    worker_id: String,
    assignment_id: String,
    accepted: bool,
    /// Reject reasons joined by `;`.
    reasons: String,
}

const SCREENED_HEADER: &str = "worker_id,assignment_id,accepted,reasons";

pub fn write_screened(outcomes: &[ScreeningOutcome]) -> Result<String> {
    let rows: Vec<ScreenedRow> = outcomes
        .iter()
        .map(|o| ScreenedRow {
            worker_id: o.worker_id.clone(),
            assignment_id: o.assignment_id.clone(),
            accepted: o.accepted,
            reasons: o.reasons.iter().map(|r| r.as_str()).collect::<Vec<_>>().join(";"),
        })
        .collect();
    write_table(&rows, SCREENED_HEADER)
}

pub fn read_screened(file: &str, text: &str) -> Result<Vec<ScreeningOutcome>> {
    let rows: Vec<ScreenedRow> = read_rows(file, text, &["worker_id", "assignment_id", "accepted", "reasons"])?;
    rows.into_iter()
        .map(|r| {
            let reasons = r
                .reasons
                .split(';')
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<RejectReason>())
                .collect::<Result<Vec<_>>>()
                .map_err(|e| schema(file, e.to_string()))?;
            Ok(ScreeningOutcome {
                worker_id: r.worker_id,
                assignment_id: r.assignment_id,
                accepted: r.accepted,
                reasons,
            })
        })
        .collect()
}

pub fn read_answer_key(file: &str, text: &str) -> Result<Vec<KeyRow>> {
    read_rows(
        file,
        text,
        &["section_id", "item_index", "trial_id", "condition_id", "order", "is_gold", "expected_gold_answer"],
    )
}

pub fn read_qualification_keys(file: &str, text: &str) -> Result<Vec<QualificationKeyRow>> {
    read_rows(file, text, &["test_id", "item_id", "expected"])
}
