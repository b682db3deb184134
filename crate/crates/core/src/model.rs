//! Domain types shared by every stage of the pipeline.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScaleKind {
    #[serde(rename = "CCR", alias = "ccr")]
    Ccr,
    #[serde(rename = "ACR", alias = "acr")]
    Acr,
}

/// An ordered category scale. Serialized as its kind only; labels and values
/// are fixed per kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "ScaleKind", into = "ScaleKind")]
pub struct RatingScale {
    kind: ScaleKind,
    labels: Vec<String>,
    values: Vec<i32>,
}

const CCR_LABELS: [&str; 7] = [
    "Much Worse",
    "Worse",
    "Slightly Worse",
    "About the Same",
    "Slightly Better",
    "Better",
    "Much Better",
];

const ACR_LABELS: [&str; 5] = ["Bad", "Poor", "Fair", "Good", "Excellent"];

impl RatingScale {
    pub fn ccr() -> Self {
        Self {
            kind: ScaleKind::Ccr,
            labels: CCR_LABELS.iter().map(|s| s.to_string()).collect(),
            values: (-3..=3).collect(),
        }
    }

    pub fn acr() -> Self {
        Self {
            kind: ScaleKind::Acr,
            labels: ACR_LABELS.iter().map(|s| s.to_string()).collect(),
            values: (1..=5).collect(),
        }
    }

    pub fn kind(&self) -> ScaleKind {
        self.kind
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn values(&self) -> &[i32] {
        &self.values
    }

    pub fn min(&self) -> i32 {
        self.values[0]
    }

    pub fn max(&self) -> i32 {
        self.values[self.values.len() - 1]
    }

    /// Lower and upper scale bounds as reals.
    pub fn bounds(&self) -> (f64, f64) {
        (f64::from(self.min()), f64::from(self.max()))
    }

    pub fn contains(&self, value: i32) -> bool {
        self.values.contains(&value)
    }

    pub fn label_of(&self, value: i32) -> Option<&str> {
        self.values
            .iter()
            .position(|&v| v == value)
            .map(|i| self.labels[i].as_str())
    }

    pub fn value_of(&self, label: &str) -> Option<i32> {
        self.labels
            .iter()
            .position(|l| l.eq_ignore_ascii_case(label))
            .map(|i| self.values[i])
    }

    /// Expected answer to a gold trial (two identical clips). Only defined for CCR.
    pub fn gold_answer(&self) -> Option<i32> {
        match self.kind {
            ScaleKind::Ccr => Some(0),
            ScaleKind::Acr => None,
        }
    }

    /// Returns the list of broken scale invariants; empty when well formed.
    pub fn check(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let expected = match self.kind {
            ScaleKind::Ccr => 7,
            ScaleKind::Acr => 5,
        };
        if self.values.len() != expected || self.labels.len() != expected {
            problems.push(format!("scale must have exactly {expected} categories"));
        }
        if self.values.windows(2).any(|w| w[0] >= w[1]) {
            problems.push("numeric values must be strictly increasing".into());
        }
        if self.kind == ScaleKind::Ccr && self.label_of(0) != Some("About the Same") {
            problems.push("CCR midpoint 0 must be labeled \"About the Same\"".into());
        }
        problems
    }
}

impl From<ScaleKind> for RatingScale {
    fn from(kind: ScaleKind) -> Self {
        match kind {
            ScaleKind::Ccr => Self::ccr(),
            ScaleKind::Acr => Self::acr(),
        }
    }
}

impl From<RatingScale> for ScaleKind {
    fn from(scale: RatingScale) -> Self {
        scale.kind
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condition {
    pub id: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub factor_tags: BTreeMap<String, String>,
}

/// One reference/processed stimulus pair bound to a condition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialPair {
    pub trial_id: String,
    pub condition_id: String,
    pub reference_uri: String,
    pub processed_uri: String,
    #[serde(default)]
    pub is_gold: bool,
    /// Overrides the scale's default gold answer (required for ACR golds).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_answer: Option<i32>,
}

impl TrialPair {
    pub fn new(
        trial_id: impl Into<String>,
        condition_id: impl Into<String>,
        reference_uri: impl Into<String>,
        processed_uri: impl Into<String>,
    ) -> Self {
        Self {
            trial_id: trial_id.into(),
            condition_id: condition_id.into(),
            reference_uri: reference_uri.into(),
            processed_uri: processed_uri.into(),
            is_gold: false,
            expected_answer: None,
        }
    }

    /// A gold trial presents the same reference clip twice.
    pub fn gold(
        trial_id: impl Into<String>,
        condition_id: impl Into<String>,
        reference_uri: impl Into<String>,
    ) -> Self {
        let uri = reference_uri.into();
        Self {
            trial_id: trial_id.into(),
            condition_id: condition_id.into(),
            reference_uri: uri.clone(),
            processed_uri: uri,
            is_gold: true,
            expected_answer: None,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.reference_uri.is_empty() || self.processed_uri.is_empty() {
            return Err(Error::Input(format!("trial {}: empty media URI", self.trial_id)));
        }
        match (self.is_gold, self.reference_uri == self.processed_uri) {
            (true, false) => Err(Error::Input(format!(
                "gold trial {} must use the same clip as reference and processed",
                self.trial_id
            ))),
            (false, true) => Err(Error::Input(format!(
                "trial {} uses identical reference and processed clips but is not gold",
                self.trial_id
            ))),
            _ => Ok(()),
        }
    }
}

fn default_assignments_per_section() -> usize {
    1
}

/// Every tunable of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub scale: RatingScale,
    /// Non-gold trials per rating section.
    pub section_size: usize,
    pub golds_per_section: usize,
    pub training_interval_minutes: i64,
    /// Max absolute category deviation from the expected gold answer.
    pub gold_tolerance: i32,
    pub hearing_pass_threshold: f64,
    pub environment_pass_threshold: f64,
    pub target_votes_per_trial: usize,
    /// How many workers the platform assigns to each manifest row.
    #[serde(default = "default_assignments_per_section")]
    pub assignments_per_section: usize,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            scale: RatingScale::ccr(),
            section_size: 10,
            golds_per_section: 1,
            training_interval_minutes: 60,
            gold_tolerance: 1,
            hearing_pass_threshold: 5.0 / 6.0,
            environment_pass_threshold: 0.8,
            target_votes_per_trial: 30,
            assignments_per_section: 1,
            seed: 0,
        }
    }
}

impl StudyConfig {
    /// Number of passes over the trial list needed to reach the vote target.
    pub fn passes(&self) -> usize {
        self.target_votes_per_trial
            .div_ceil(self.assignments_per_section.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl Violation {
    fn new(field: &str, rule: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

/// Checks the field invariants of a config. An empty list means the config is valid.
pub fn validate_study_config(config: &StudyConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    for problem in config.scale.check() {
        out.push(Violation::new("scale", problem));
    }
    if !(10..=12).contains(&config.section_size) {
        out.push(Violation::new("section_size", "section_size outside 10..12"));
    }
    if config.golds_per_section < 1 {
        out.push(Violation::new("golds_per_section", "must be at least 1"));
    }
    if config.training_interval_minutes <= 0 {
        out.push(Violation::new("training_interval_minutes", "must be positive"));
    }
    if !(0..=3).contains(&config.gold_tolerance) {
        out.push(Violation::new("gold_tolerance", "gold_tolerance outside 0..3"));
    }
    for (field, value) in [
        ("hearing_pass_threshold", config.hearing_pass_threshold),
        ("environment_pass_threshold", config.environment_pass_threshold),
    ] {
        if !(0.0..=1.0).contains(&value) {
            out.push(Violation::new(field, "threshold outside [0, 1]"));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PresentationOrder {
    #[serde(rename = "R_FIRST")]
    ReferenceFirst,
    #[serde(rename = "P_FIRST")]
    ProcessedFirst,
}

impl PresentationOrder {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::ReferenceFirst => "R_FIRST",
            Self::ProcessedFirst => "P_FIRST",
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Self::ReferenceFirst => Self::ProcessedFirst,
            Self::ProcessedFirst => Self::ReferenceFirst,
        }
    }
}

impl std::str::FromStr for PresentationOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "R_FIRST" => Ok(Self::ReferenceFirst),
            "P_FIRST" => Ok(Self::ProcessedFirst),
            other => Err(Error::Input(format!("unknown presentation order {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub trial_id: String,
    pub raw_rating: i32,
    /// Absent for ACR votes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub presentation_order: Option<PresentationOrder>,
    #[serde(default = "yes")]
    pub listen_complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAnswer {
    pub trial_id: String,
    pub rating: i32,
}

/// Answer given to one training item, keyed by its position in the training block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingAnswer {
    pub item_index: usize,
    pub rating: i32,
}

/// One worker's answers for one assignment, with trials resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub worker_id: String,
    pub assignment_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub section_id: Option<String>,
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
    #[serde(default)]
    pub gold_answers: Vec<GoldAnswer>,
    #[serde(default)]
    pub votes: Vec<VoteRecord>,
}

impl Submission {
    /// Structural checks that do not need the study: vote/gold disjointness
    /// and timestamp syntax.
    pub fn check_structure(&self) -> Result<()> {
        if self.worker_id.is_empty() || self.assignment_id.is_empty() {
            return Err(Error::Input("worker_id and assignment_id must be non-empty".into()));
        }
        parse_timestamp("session_timestamp", &self.session_timestamp)?;
        if let Some(ts) = &self.last_training_timestamp {
            parse_timestamp("last_training_timestamp", ts)?;
        }
        let gold: BTreeSet<&str> = self.gold_answers.iter().map(|g| g.trial_id.as_str()).collect();
        let mut seen = BTreeSet::new();
        for vote in &self.votes {
            if gold.contains(vote.trial_id.as_str()) {
                return Err(Error::Input(format!(
                    "trial {} appears both as vote and gold answer",
                    vote.trial_id
                )));
            }
            if !seen.insert(vote.trial_id.as_str()) {
                return Err(Error::Input(format!("trial {} voted twice", vote.trial_id)));
            }
        }
        Ok(())
    }
}

/// Aggregated score of one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionScore {
    pub condition_id: String,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub ci95: f64,
}

pub fn parse_timestamp(field: &str, value: &str) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(value)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| Error::Input(format!("{field}: malformed timestamp {value:?} ({e})")))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum TrainingFlag {
    /// The worker never trained and the session has no training answers.
    NoPriorTraining,
    /// The training interval elapsed and the session has no training answers.
    TrainingOverdue { elapsed_minutes: i64 },
}

/// Advisory check of the periodic-training rule. Flags never reject a submission.
pub fn validate_training_exposure(
    submission: &Submission,
    config: &StudyConfig,
) -> Result<Vec<TrainingFlag>> {
    let session = parse_timestamp("session_timestamp", &submission.session_timestamp)?;
    let last = submission
        .last_training_timestamp
        .as_deref()
        .map(|ts| parse_timestamp("last_training_timestamp", ts))
        .transpose()?;
    if !submission.training_answers.is_empty() {
        return Ok(Vec::new());
    }
    let interval_secs = config.training_interval_minutes * 60;
    let flag = match last {
        None => Some(TrainingFlag::NoPriorTraining),
        Some(last) => {
            let elapsed = (session - last).num_seconds();
            (elapsed >= interval_secs).then_some(TrainingFlag::TrainingOverdue {
                elapsed_minutes: elapsed / 60,
            })
        }
    };
    Ok(flag.into_iter().collect())
}

/// A complete study file: config, factor declarations, conditions and trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyDefinition {
    pub study_id: String,
    pub config: StudyConfig,
    #[serde(default)]
    pub factors: BTreeMap<String, Vec<String>>,
    pub conditions: Vec<Condition>,
    pub trials: Vec<TrialPair>,
    pub gold_pool: Vec<TrialPair>,
    /// Anchor stimuli plus training golds, shown before rating when due.
    #[serde(default)]
    pub training: Vec<TrialPair>,
}

impl StudyDefinition {
    pub fn from_json(text: &str) -> Result<Self> {
        let study: Self = serde_json::from_str(text)?;
        study.validate()?;
        Ok(study)
    }

    /// Full consistency check. Collects every problem into one config error.
    pub fn validate(&self) -> Result<()> {
        let mut problems: Vec<String> = validate_study_config(&self.config)
            .iter()
            .map(ToString::to_string)
            .collect();

        let mut condition_ids = BTreeSet::new();
        for c in &self.conditions {
            if !condition_ids.insert(c.id.as_str()) {
                problems.push(format!("duplicate condition id {}", c.id));
            }
            for (factor, level) in &c.factor_tags {
                match self.factors.get(factor) {
                    None => problems.push(format!("condition {}: undeclared factor {factor}", c.id)),
                    Some(levels) if !levels.contains(level) => problems.push(format!(
                        "condition {}: level {level} not declared for factor {factor}",
                        c.id
                    )),
                    _ => {}
                }
            }
        }

        let mut trial_ids = BTreeSet::new();
        let groups = [
            ("trials", &self.trials, false),
            ("gold_pool", &self.gold_pool, true),
        ];
        for (name, list, gold) in groups {
            for t in list.iter() {
                if !trial_ids.insert(t.trial_id.as_str()) {
                    problems.push(format!("duplicate trial id {}", t.trial_id));
                }
                if !condition_ids.contains(t.condition_id.as_str()) {
                    problems.push(format!("{name}: trial {} references unknown condition {}", t.trial_id, t.condition_id));
                }
                if t.is_gold != gold {
                    problems.push(format!("{name}: trial {} has is_gold={}", t.trial_id, t.is_gold));
                }
                if let Err(e) = t.check() {
                    problems.push(e.to_string());
                }
                if gold && t.expected_answer.or(self.config.scale.gold_answer()).is_none() {
                    problems.push(format!("gold trial {} needs an expected_answer on this scale", t.trial_id));
                }
            }
        }
        for t in &self.training {
            if let Err(e) = t.check() {
                problems.push(format!("training: {e}"));
            }
        }

        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn condition(&self, id: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.id == id)
    }

    /// Expected answer of a gold trial under this study's scale.
    pub fn gold_expected(&self, trial: &TrialPair) -> Option<i32> {
        trial.expected_answer.or(self.config.scale.gold_answer())
    }
}
