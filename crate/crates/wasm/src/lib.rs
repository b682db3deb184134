//! Browser bindings for the demo page. Every export takes plain numbers or a
//! JSON string and returns a JSON string.

use ccr_core::model::ConditionScore;
use ccr_core::scoring::{correct_vote, fit_sos, score_conditions, CorrectedVote};
use ccr_core::simulator::{evenly_spaced_scores, run_replication_experiment, RaterModel};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

#[derive(Debug, Serialize)]
pub struct SimulationView {
    pub conditions: Vec<String>,
    pub truth: Vec<f64>,
    /// Condition means per run.
    pub runs: Vec<Vec<f64>>,
    pub icc: f64,
    pub pairs: Vec<(String, String, f64, f64, f64)>,
    pub mean_rmse: f64,
    pub mean_rmse_after_mapping: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn simulate(
    n_conditions: usize,
    low: f64,
    span: f64,
    sigma_v: f64,
    sigma_b: f64,
    raters: usize,
    votes: usize,
    last_offset: f64,
    seed: u64,
) -> ccr_core::Result<SimulationView> {
    let truth = evenly_spaced_scores(n_conditions, low, span);
    let mut models = vec![RaterModel::ccr(sigma_b, sigma_v); 3];
    models[2].offset = last_offset;
    let exp = run_replication_experiment(&truth, &models, raters, votes, seed)?;
    Ok(SimulationView {
        conditions: truth.keys().cloned().collect(),
        truth: truth.values().copied().collect(),
        runs: exp.runs.iter().map(|r| r.scores.iter().map(|s| s.mean).collect()).collect(),
        icc: exp.summary.icc.icc,
        pairs: exp
            .summary
            .pairs
            .iter()
            .map(|p| (p.a.clone(), p.b.clone(), p.pearson, p.spearman, p.rmse))
            .collect(),
        mean_rmse: exp.summary.mean_rmse,
        mean_rmse_after_mapping: exp.summary.mean_rmse_after_mapping,
    })
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn simulate_replication(
    n_conditions: usize,
    low: f64,
    span: f64,
    sigma_v: f64,
    sigma_b: f64,
    raters: usize,
    votes: usize,
    last_offset: f64,
    seed: u32,
) -> Result<String, JsValue> {
    let view = simulate(n_conditions, low, span, sigma_v, sigma_b, raters, votes, last_offset, u64::from(seed))
        .map_err(js_err)?;
    serde_json::to_string(&view).map_err(js_err)
}

#[derive(Debug, Serialize)]
pub struct SosView {
    pub a: f64,
    pub rmse: f64,
    /// (x, predicted sd) along the scale.
    pub curve: Vec<(f64, f64)>,
}

/// `points` is `[[mean, sd], ...]`.
pub fn sos(points: &[(f64, f64)], lower: f64, upper: f64) -> ccr_core::Result<SosView> {
    let fit = fit_sos(points, lower, upper)?;
    let curve = (0..=100)
        .map(|i| {
            let x = lower + (upper - lower) * f64::from(i) / 100.0;
            (x, fit.sos(x))
        })
        .collect();
    Ok(SosView {
        a: fit.a,
        rmse: fit.rmse,
        curve,
    })
}

#[wasm_bindgen]
pub fn fit_sos_curve(points_json: &str, lower: f64, upper: f64) -> Result<String, JsValue> {
    let points: Vec<(f64, f64)> = serde_json::from_str(points_json).map_err(js_err)?;
    serde_json::to_string(&sos(&points, lower, upper).map_err(js_err)?).map_err(js_err)
}

#[derive(Debug, Deserialize)]
pub struct RawVote {
    pub condition_id: String,
    pub rating: i32,
    /// `R_FIRST` or `P_FIRST`.
    pub order: String,
}

pub fn score(votes: &[RawVote]) -> ccr_core::Result<Vec<ConditionScore>> {
    let corrected = votes
        .iter()
        .enumerate()
        .map(|(i, v)| {
            if !(-3..=3).contains(&v.rating) {
                return Err(ccr_core::Error::Input(format!("vote {i}: rating {} outside -3..3", v.rating)));
            }
            Ok(CorrectedVote {
                trial_id: String::new(),
                condition_id: v.condition_id.clone(),
                value: correct_vote(v.rating, Some(v.order.parse()?))?,
            })
        })
        .collect::<ccr_core::Result<Vec<_>>>()?;
    Ok(score_conditions(&corrected))
}

/// Corrects raw CCR votes and returns per-condition CMOS with 95% CIs.
#[wasm_bindgen]
pub fn score_votes(votes_json: &str) -> Result<String, JsValue> {
    let votes: Vec<RawVote> = serde_json::from_str(votes_json).map_err(js_err)?;
    serde_json::to_string(&score(&votes).map_err(js_err)?).map_err(js_err)
}
