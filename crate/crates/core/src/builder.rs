//! Compiles a study definition into rating sections and platform manifests.
//!
//! The whole builder is a pure function of the study and the seed. Each
//! random decision draws from its own ChaCha stream so that changing one part
//! of the plan does not reshuffle the others.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PresentationOrder, StudyConfig, StudyDefinition, TrialPair};

const STREAM_ORDER: u64 = 1;
const STREAM_PASSES: u64 = 2;
const STREAM_FILLER: u64 = 3;
const STREAM_GOLD: u64 = 4;
const STREAM_TRAINING: u64 = 5;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionItem {
    pub trial_id: String,
    pub condition_id: String,
    pub first_uri: String,
    pub second_uri: String,
    pub hidden_order: PresentationOrder,
    pub is_gold: bool,
    pub expected_gold_answer: Option<i32>,
}

impl SectionItem {
    fn new(
        trial: &TrialPair,
        order: PresentationOrder,
        expected_gold_answer: Option<i32>,
    ) -> Self {
        let (first, second) = match order {
            PresentationOrder::ReferenceFirst => (&trial.reference_uri, &trial.processed_uri),
            PresentationOrder::ProcessedFirst => (&trial.processed_uri, &trial.reference_uri),
        };
        Self {
            trial_id: trial.trial_id.clone(),
            condition_id: trial.condition_id.clone(),
            first_uri: first.clone(),
            second_uri: second.clone(),
            hidden_order: order,
            is_gold: trial.is_gold,
            expected_gold_answer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingSection {
    pub section_id: String,
    pub items: Vec<SectionItem>,
}

impl RatingSection {
    pub fn gold_count(&self) -> usize {
        self.items.iter().filter(|i| i.is_gold).count()
    }
}

/// Assigns a presentation order to every (trial, replication) slot so that
/// within each trial the two orders differ in count by at most one.
pub fn assign_presentation_order(
    assignments: &[(String, usize)],
    seed: u64,
) -> BTreeMap<(String, usize), PresentationOrder> {
    let mut by_trial: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    for (trial, rep) in assignments {
        by_trial.entry(trial).or_default().insert(*rep);
    }
    let mut rng = stream_rng(seed, STREAM_ORDER);
    let mut out = BTreeMap::new();
    for (trial, reps) in by_trial {
        let r = reps.len();
        let mut orders: Vec<PresentationOrder> = (0..r)
            .map(|i| {
                if i < r / 2 {
                    PresentationOrder::ReferenceFirst
                } else {
                    PresentationOrder::ProcessedFirst
                }
            })
            .collect();
        if r % 2 == 1 && rng.random_bool(0.5) {
            orders[r - 1] = PresentationOrder::ReferenceFirst;
        }
        orders.shuffle(&mut rng);
        for (rep, order) in reps.into_iter().zip(orders) {
            out.insert((trial.to_string(), rep), order);
        }
    }
    out
}

/// Lays every non-gold trial out over `config.passes()` passes, chunked into
/// sections of `section_size` distinct trials plus `golds_per_section` golds
/// at random positions. When the slot count is not a multiple of the section
/// size, the final section is topped up with extra distinct trials.
pub fn assemble_sections(
    trials: &[TrialPair],
    gold_pool: &[TrialPair],
    config: &StudyConfig,
    seed: u64,
) -> Result<Vec<RatingSection>> {
    if gold_pool.is_empty() {
        return Err(Error::Config("gold pool is empty".into()));
    }
    if gold_pool.len() < config.golds_per_section {
        return Err(Error::Config(format!(
            "gold pool has {} trials but sections need {} distinct golds",
            gold_pool.len(),
            config.golds_per_section
        )));
    }
    if trials.is_empty() {
        return Err(Error::Config("no trials to schedule".into()));
    }
    let size = config.section_size;
    if size == 0 {
        return Err(Error::Config("section_size must be positive".into()));
    }
    if trials.len() < size {
        return Err(Error::Config(format!(
            "{} trials cannot fill a section of {size} distinct trials",
            trials.len()
        )));
    }
    let passes = config.passes();
    if passes == 0 {
        return Err(Error::Config("target_votes_per_trial must be at least 1".into()));
    }

    // slot = (trial index, replication index)
    let mut pass_rng = stream_rng(seed, STREAM_PASSES);
    let mut queue: VecDeque<(usize, usize)> = VecDeque::new();
    for pass in 0..passes {
        let mut order: Vec<usize> = (0..trials.len()).collect();
        order.shuffle(&mut pass_rng);
        queue.extend(order.into_iter().map(|t| (t, pass)));
    }

    let mut filler_rng = stream_rng(seed, STREAM_FILLER);
    let mut extra_reps: BTreeMap<usize, usize> = BTreeMap::new();
    let mut plan: Vec<Vec<(usize, usize)>> = Vec::new();
    while !queue.is_empty() {
        let mut section: Vec<(usize, usize)> = Vec::with_capacity(size);
        while section.len() < size {
            let pos = queue
                .iter()
                .position(|(t, _)| section.iter().all(|(s, _)| s != t));
            match pos {
                Some(p) => section.push(queue.remove(p).expect("position is in range")),
                None => break,
            }
        }
        if section.len() < size {
            let mut candidates: Vec<usize> = (0..trials.len())
                .filter(|t| section.iter().all(|(s, _)| s != t))
                .collect();
            candidates.shuffle(&mut filler_rng);
            for t in candidates.into_iter().take(size - section.len()) {
                let extra = extra_reps.entry(t).or_insert(0);
                section.push((t, passes + *extra));
                *extra += 1;
            }
        }
        plan.push(section);
    }

    let slots: Vec<(String, usize)> = plan
        .iter()
        .flatten()
        .map(|&(t, rep)| (trials[t].trial_id.clone(), rep))
        .collect();
    let orders = assign_presentation_order(&slots, seed);

    let mut gold_rng = stream_rng(seed, STREAM_GOLD);
    let mut gold_deck: Vec<usize> = Vec::new();
    let default_gold = config.scale.gold_answer();
    let mut sections = Vec::with_capacity(plan.len());
    for (index, slots) in plan.into_iter().enumerate() {
        let mut items: Vec<SectionItem> = slots
            .into_iter()
            .map(|(t, rep)| {
                let trial = &trials[t];
                let order = orders[&(trial.trial_id.clone(), rep)];
                SectionItem::new(trial, order, None)
            })
            .collect();
        let mut chosen: Vec<usize> = Vec::new();
        while chosen.len() < config.golds_per_section {
            if gold_deck.is_empty() {
                gold_deck = (0..gold_pool.len()).collect();
                gold_deck.shuffle(&mut gold_rng);
            }
            let g = gold_deck.pop().expect("deck refilled above");
            if chosen.contains(&g) {
                // drawn twice across a deck boundary; put it back for the next section
                gold_deck.insert(0, g);
                continue;
            }
            chosen.push(g);
        }
        for g in chosen {
            let gold = &gold_pool[g];
            let order = if gold_rng.random_bool(0.5) {
                PresentationOrder::ReferenceFirst
            } else {
                PresentationOrder::ProcessedFirst
            };
            let expected = gold.expected_answer.or(default_gold);
            let pos = gold_rng.random_range(0..=items.len());
            items.insert(pos, SectionItem::new(gold, order, expected));
        }
        sections.push(RatingSection {
            section_id: format!("S{:04}", index + 1),
            items,
        });
    }
    Ok(sections)
}

/// Worker-visible manifest row. Carries no order or gold information.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerRow {
    pub section_id: String,
    pub item_index: usize,
    pub clip_first_url: String,
    pub clip_second_url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyRow {
    pub section_id: String,
    pub item_index: usize,
    pub trial_id: String,
    pub condition_id: String,
    pub order: PresentationOrder,
    pub is_gold: bool,
    pub expected_gold_answer: Option<i32>,
}

/// Worker CSV plus the separate answer key, joined on (section_id, item_index).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskManifest {
    pub worker: Vec<WorkerRow>,
    pub key: Vec<KeyRow>,
}

fn check_uri(uri: &str) -> Result<()> {
    if uri.is_empty() {
        return Err(Error::Serialization("empty media URI".into()));
    }
    if uri.contains(['\n', '\r']) {
        return Err(Error::Serialization(format!("media URI contains a line break: {uri:?}")));
    }
    Ok(())
}

pub fn emit_task_manifest(sections: &[RatingSection]) -> Result<TaskManifest> {
    let mut worker = Vec::new();
    let mut key = Vec::new();
    for section in sections {
        for (i, item) in section.items.iter().enumerate() {
            check_uri(&item.first_uri)?;
            check_uri(&item.second_uri)?;
            worker.push(WorkerRow {
                section_id: section.section_id.clone(),
                item_index: i,
                clip_first_url: item.first_uri.clone(),
                clip_second_url: item.second_uri.clone(),
            });
            key.push(KeyRow {
                section_id: section.section_id.clone(),
                item_index: i,
                trial_id: item.trial_id.clone(),
                condition_id: item.condition_id.clone(),
                order: item.hidden_order,
                is_gold: item.is_gold,
                expected_gold_answer: item.expected_gold_answer,
            });
        }
    }
    Ok(TaskManifest { worker, key })
}

pub(crate) fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Serialization(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serialization(e.to_string()))
}

pub(crate) fn from_csv<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(Error::from)
}

impl TaskManifest {
    pub fn worker_csv(&self) -> Result<String> {
        if self.worker.is_empty() {
            return Ok("section_id,item_index,clip_first_url,clip_second_url\n".into());
        }
        to_csv(&self.worker)
    }

    pub fn key_csv(&self) -> Result<String> {
        if self.key.is_empty() {
            return Ok(
                "section_id,item_index,trial_id,condition_id,order,is_gold,expected_gold_answer\n"
                    .into(),
            );
        }
        to_csv(&self.key)
    }

    pub fn from_csv(worker_csv: &str, key_csv: &str) -> Result<Self> {
        Ok(Self {
            worker: from_csv(worker_csv)?,
            key: from_csv(key_csv)?,
        })
    }

    /// Rebuilds the section plan by joining worker rows with key rows.
    pub fn to_sections(&self) -> Result<Vec<RatingSection>> {
        if self.worker.len() != self.key.len() {
            return Err(Error::Input(format!(
                "worker manifest has {} rows but answer key has {}",
                self.worker.len(),
                self.key.len()
            )));
        }
        let keys: BTreeMap<(&str, usize), &KeyRow> = self
            .key
            .iter()
            .map(|k| ((k.section_id.as_str(), k.item_index), k))
            .collect();
        let mut sections: Vec<RatingSection> = Vec::new();
        for row in &self.worker {
            let k = keys
                .get(&(row.section_id.as_str(), row.item_index))
                .ok_or_else(|| {
                    Error::Input(format!(
                        "no answer key for section {} item {}",
                        row.section_id, row.item_index
                    ))
                })?;
            if sections.last().map(|s| &s.section_id) != Some(&row.section_id) {
                sections.push(RatingSection {
                    section_id: row.section_id.clone(),
                    items: Vec::new(),
                });
            }
            let section = sections.last_mut().expect("pushed above");
            if row.item_index != section.items.len() {
                return Err(Error::Input(format!(
                    "section {} rows out of order at item {}",
                    row.section_id, row.item_index
                )));
            }
            section.items.push(SectionItem {
                trial_id: k.trial_id.clone(),
                condition_id: k.condition_id.clone(),
                first_uri: row.clip_first_url.clone(),
                second_uri: row.clip_second_url.clone(),
                hidden_order: k.order,
                is_gold: k.is_gold,
                expected_gold_answer: k.expected_gold_answer,
            });
        }
        Ok(sections)
    }
}

/// Training item as delivered to the rating page. Training golds expose their
/// expected answer so the page can show feedback.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingItem {
    pub item_index: usize,
    pub clip_first_url: String,
    pub clip_second_url: String,
    pub is_gold: bool,
    pub expected_answer: Option<i32>,
}

pub fn build_training_block(study: &StudyDefinition, seed: u64) -> Vec<TrainingItem> {
    let mut rng = stream_rng(seed, STREAM_TRAINING);
    study
        .training
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let order = if rng.random_bool(0.5) {
                PresentationOrder::ReferenceFirst
            } else {
                PresentationOrder::ProcessedFirst
            };
            let item = SectionItem::new(t, order, None);
            TrainingItem {
                item_index: i,
                clip_first_url: item.first_uri,
                clip_second_url: item.second_uri,
                is_gold: t.is_gold,
                expected_answer: t.is_gold.then(|| study.gold_expected(t)).flatten(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerSection {
    pub section_id: String,
    pub items: Vec<WorkerRow>,
}

/// JSON packaging of the worker manifest consumed by the rating page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerManifestJson {
    pub study_id: String,
    pub scale: crate::model::ScaleKind,
    pub gold_tolerance: i32,
    pub training_interval_minutes: i64,
    pub sections: Vec<WorkerSection>,
    pub training: Vec<TrainingItem>,
}

/// Everything `build` produces for one study and seed.
#[derive(Debug, Clone)]
pub struct BuildOutput {
    pub sections: Vec<RatingSection>,
    pub manifest: TaskManifest,
    pub training: Vec<TrainingItem>,
    pub worker_json: WorkerManifestJson,
}

pub fn build_study(study: &StudyDefinition, seed: u64) -> Result<BuildOutput> {
    study.validate()?;
    let sections = assemble_sections(&study.trials, &study.gold_pool, &study.config, seed)?;
    let manifest = emit_task_manifest(&sections)?;
    let training = build_training_block(study, seed);
    let mut worker_sections: Vec<WorkerSection> = Vec::new();
    for row in &manifest.worker {
        if worker_sections.last().map(|s| &s.section_id) != Some(&row.section_id) {
            worker_sections.push(WorkerSection {
                section_id: row.section_id.clone(),
                items: Vec::new(),
            });
        }
        worker_sections
            .last_mut()
            .expect("pushed above")
            .items
            .push(row.clone());
    }
    let worker_json = WorkerManifestJson {
        study_id: study.study_id.clone(),
        scale: study.config.scale.kind(),
        gold_tolerance: study.config.gold_tolerance,
        training_interval_minutes: study.config.training_interval_minutes,
        sections: worker_sections,
        training: training.clone(),
    };
    Ok(BuildOutput {
        sections,
        manifest,
        training,
        worker_json,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trials(n: usize) -> Vec<TrialPair> {
        (0..n)
            .map(|i| {
                TrialPair::new(
                    format!("t{i:03}"),
                    format!("C{:02}", i % 24),
                    format!("ref/{i}.wav"),
                    format!("proc/{i}.wav"),
                )
            })
            .collect()
    }

    fn golds(n: usize) -> Vec<TrialPair> {
        (0..n)
            .map(|i| TrialPair::gold(format!("g{i}"), "REF", format!("ref/gold{i}.wav")))
            .collect()
    }

    fn config(votes: usize) -> StudyConfig {
        StudyConfig {
            target_votes_per_trial: votes,
            ..StudyConfig::default()
        }
    }

    #[test]
    fn thirty_replications_split_evenly() {
        let slots: Vec<(String, usize)> = (0..30).map(|r| ("t1".to_string(), r)).collect();
        let orders = assign_presentation_order(&slots, 7);
        let rf = orders
            .values()
            .filter(|o| **o == PresentationOrder::ReferenceFirst)
            .count();
        assert_eq!(rf, 15);
        assert_eq!(orders.len(), 30);
    }

    #[test]
    fn single_replication_and_determinism() {
        let slots = vec![("t1".to_string(), 0)];
        assert_eq!(assign_presentation_order(&slots, 1).len(), 1);
        let slots: Vec<(String, usize)> = (0..9)
            .flat_map(|r| [("a".to_string(), r), ("b".to_string(), r)])
            .collect();
        assert_eq!(
            assign_presentation_order(&slots, 99),
            assign_presentation_order(&slots, 99)
        );
    }

    #[test]
    fn two_forty_trials_make_24_sections_per_pass() {
        let sections = assemble_sections(&trials(240), &golds(5), &config(1), 3).unwrap();
        assert_eq!(sections.len(), 24);
        for s in &sections {
            assert_eq!(s.items.len(), 11);
            assert_eq!(s.gold_count(), 1);
        }
        let sections = assemble_sections(&trials(240), &golds(5), &config(3), 3).unwrap();
        assert_eq!(sections.len(), 72);
    }

    #[test]
    fn ten_trials_single_section() {
        let sections = assemble_sections(&trials(10), &golds(1), &config(1), 0).unwrap();
        assert_eq!(sections.len(), 1);
        assert_eq!(sections[0].items.len(), 11);
    }

    #[test]
    fn every_trial_scheduled_once_per_pass_without_duplicates() {
        let ts = trials(40);
        let sections = assemble_sections(&ts, &golds(3), &config(6), 11).unwrap();
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for s in &sections {
            let ids: BTreeSet<&str> = s.items.iter().map(|i| i.trial_id.as_str()).collect();
            assert_eq!(ids.len(), s.items.len(), "duplicate in {}", s.section_id);
            for i in s.items.iter().filter(|i| !i.is_gold) {
                *counts.entry(&i.trial_id).or_default() += 1;
            }
        }
        assert_eq!(counts.len(), 40);
        assert!(counts.values().all(|&c| c == 6));
    }

    #[test]
    fn remainder_is_topped_up() {
        let sections = assemble_sections(&trials(25), &golds(2), &config(1), 5).unwrap();
        assert_eq!(sections.len(), 3);
        assert!(sections.iter().all(|s| s.items.len() == 11));
    }

    #[test]
    fn orders_balanced_per_trial() {
        let sections = assemble_sections(&trials(30), &golds(2), &config(7), 21).unwrap();
        let mut balance: BTreeMap<&str, i64> = BTreeMap::new();
        for item in sections.iter().flat_map(|s| &s.items).filter(|i| !i.is_gold) {
            let d = match item.hidden_order {
                PresentationOrder::ReferenceFirst => 1,
                PresentationOrder::ProcessedFirst => -1,
            };
            *balance.entry(&item.trial_id).or_default() += d;
        }
        assert!(balance.values().all(|b| b.abs() <= 1));
    }

    #[test]
    fn uris_follow_hidden_order() {
        let sections = assemble_sections(&trials(12), &golds(2), &config(2), 8).unwrap();
        for item in sections.iter().flat_map(|s| &s.items).filter(|i| !i.is_gold) {
            let ref_first = item.first_uri.starts_with("ref/");
            assert_eq!(ref_first, item.hidden_order == PresentationOrder::ReferenceFirst);
        }
    }

    #[test]
    fn configuration_errors() {
        assert!(matches!(
            assemble_sections(&trials(10), &[], &config(1), 0),
            Err(Error::Config(_))
        ));
        assert!(assemble_sections(&trials(9), &golds(1), &config(1), 0).is_err());
    }

    #[test]
    fn manifest_counts_blinding_and_round_trip() {
        let sections = assemble_sections(&trials(240), &golds(4), &config(1), 42).unwrap();
        let manifest = emit_task_manifest(&sections).unwrap();
        assert_eq!(manifest.worker.len(), 264);
        assert_eq!(manifest.key.len(), 264);

        let worker_csv = manifest.worker_csv().unwrap();
        let header = worker_csv.lines().next().unwrap();
        assert_eq!(header, "section_id,item_index,clip_first_url,clip_second_url");
        let key_csv = manifest.key_csv().unwrap();
        assert_eq!(
            key_csv.lines().next().unwrap(),
            "section_id,item_index,trial_id,condition_id,order,is_gold,expected_gold_answer"
        );

        let parsed = TaskManifest::from_csv(&worker_csv, &key_csv).unwrap();
        assert_eq!(parsed, manifest);
        assert_eq!(parsed.to_sections().unwrap(), sections);
    }

    #[test]
    fn delimiter_in_uri_is_quoted() {
        let mut ts = trials(10);
        ts[0].processed_uri = "proc/a,b.wav".into();
        let sections = assemble_sections(&ts, &golds(1), &config(1), 0).unwrap();
        let manifest = emit_task_manifest(&sections).unwrap();
        let parsed =
            TaskManifest::from_csv(&manifest.worker_csv().unwrap(), &manifest.key_csv().unwrap())
                .unwrap();
        assert_eq!(parsed.to_sections().unwrap(), sections);

        let mut bad = sections.clone();
        bad[0].items[0].first_uri = "a\nb".into();
        assert!(matches!(emit_task_manifest(&bad), Err(Error::Serialization(_))));
    }
}
