//! Pipeline report: summary metrics, a text rendering and plot-ready tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ConditionScore;
use crate::scoring::{fit_sos, normalize_mean_score, SosFit};
use crate::screening::ScreeningSummary;
use crate::stats::{compare_columns, replication_summary, PairComparison, ReplicationSummary};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportInputs {
    pub study_id: String,
    /// Named score tables, one per run.
    pub runs: Vec<(String, Vec<ConditionScore>)>,
    /// Optional reference scores (e.g. laboratory MOS) for the scatter plot.
    pub reference: Option<(String, BTreeMap<String, f64>)>,
    pub screening: Option<ScreeningSummary>,
    /// Scale bounds used for SOS fitting and normalization.
    pub bounds: (f64, f64),
    /// Echoed verbatim into the report.
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub name: String,
    pub conditions: usize,
    pub votes: usize,
    pub mean_ci95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub study_id: String,
    pub config: serde_json::Value,
    /// Files read and written, filled in by the caller.
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub acceptance_rate: Option<f64>,
    pub screening: Option<ScreeningSummary>,
    pub runs: Vec<RunMetrics>,
    pub reference_comparison: Option<PairComparison>,
    pub replication: Option<ReplicationSummary>,
    pub sos: Option<SosFit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOutput {
    pub report: PipelineReport,
    pub text: String,
    /// condition_id,x,y
    pub scatter_csv: String,
    /// condition_id,mean,normalized_mean,sd,sos_fit
    pub sos_csv: String,
}

fn means(scores: &[ConditionScore]) -> BTreeMap<String, f64> {
    scores.iter().map(|s| (s.condition_id.clone(), s.mean)).collect()
}

pub fn run_report(inputs: &ReportInputs) -> Result<ReportOutput> {
    if inputs.runs.is_empty() || inputs.runs.iter().any(|(_, s)| s.is_empty()) {
        return Err(Error::Usage("report needs at least one non-empty score table".into()));
    }
    let (lower, upper) = inputs.bounds;

    let runs: Vec<RunMetrics> = inputs
        .runs
        .iter()
        .map(|(name, scores)| RunMetrics {
            name: name.clone(),
            conditions: scores.len(),
            votes: scores.iter().map(|s| s.n).sum(),
            mean_ci95: scores.iter().map(|s| s.ci95).sum::<f64>() / scores.len() as f64,
        })
        .collect();

    let tables: Vec<BTreeMap<String, f64>> = inputs.runs.iter().map(|(_, s)| means(s)).collect();
    let replication = if tables.len() >= 2 {
        let names: Vec<String> = inputs.runs.iter().map(|(n, _)| n.clone()).collect();
        let refs: Vec<&BTreeMap<String, f64>> = tables.iter().collect();
        Some(replication_summary(&names, &refs, None)?)
    } else {
        None
    };

    let first = &inputs.runs[0];
    let (scatter_name, scatter_b) = match &inputs.reference {
        Some((name, values)) => (name.clone(), values.clone()),
        None if tables.len() >= 2 => (inputs.runs[1].0.clone(), tables[1].clone()),
        None => (String::new(), BTreeMap::new()),
    };
    let mut scatter_csv = String::from("condition_id,x,y\n");
    let mut reference_comparison = None;
    if !scatter_b.is_empty() {
        let (ids, cols) = crate::stats::align_tables(&[&tables[0], &scatter_b])?;
        for (i, id) in ids.iter().enumerate() {
            writeln!(scatter_csv, "{id},{},{}", cols[0][i], cols[1][i]).unwrap();
        }
        if inputs.reference.is_some() {
            reference_comparison = Some(compare_columns(&scatter_name, &cols[1], &first.0, &cols[0])?);
        }
    }

    let points: Vec<(f64, f64)> = first.1.iter().map(|s| (s.mean, s.sd)).collect();
    let sos = match fit_sos(&points, lower, upper) {
        Ok(fit) => Some(fit),
        Err(Error::Undefined(_)) => None,
        Err(e) => return Err(e),
    };
    let mut sos_csv = String::from("condition_id,mean,normalized_mean,sd,sos_fit\n");
    for s in &first.1 {
        let norm = normalize_mean_score(s.mean, lower, upper)?;
        let fitted = sos.map(|f| f.sos(s.mean).to_string()).unwrap_or_default();
        writeln!(sos_csv, "{},{},{},{},{}", s.condition_id, s.mean, norm, s.sd, fitted).unwrap();
    }

    let report = PipelineReport {
        study_id: inputs.study_id.clone(),
        config: inputs.config.clone(),
        inputs: Vec::new(),
        outputs: Vec::new(),
        acceptance_rate: inputs.screening.as_ref().map(|s| s.acceptance_rate),
        screening: inputs.screening.clone(),
        runs,
        reference_comparison,
        replication,
        sos,
    };
    let text = render_text(&report);
    Ok(ReportOutput {
        report,
        text,
        scatter_csv,
        sos_csv,
    })
}

pub fn render_text(r: &PipelineReport) -> String {
    let mut t = String::new();
    writeln!(t, "study: {}", r.study_id).unwrap();
    if let Some(s) = &r.screening {
        writeln!(
            t,
            "screening: {} of {} accepted ({:.1}%), {:.1} votes/condition (sd {:.1})",
            s.accepted,
            s.total,
            100.0 * s.acceptance_rate,
            s.mean_votes_per_condition,
            s.sd_votes_per_condition
        )
        .unwrap();
    }
    for run in &r.runs {
        writeln!(
            t,
            "run {}: {} conditions, {} votes, mean CI95 {:.3}",
            run.name, run.conditions, run.votes, run.mean_ci95
        )
        .unwrap();
    }
    if let Some(c) = &r.reference_comparison {
        writeln!(
            t,
            "{} vs {}: PCC {:.3}, SRCC {:.3}, RMSE {:.3}",
            c.a, c.b, c.pearson, c.spearman, c.rmse
        )
        .unwrap();
    }
    if let Some(rep) = &r.replication {
        for p in &rep.pairs {
            writeln!(
                t,
                "{} vs {}: PCC {:.3}, SRCC {:.3}, RMSE {:.3}",
                p.a, p.b, p.pearson, p.spearman, p.rmse
            )
            .unwrap();
        }
        writeln!(t, "ICC(A,1): {:.3}", rep.icc.icc).unwrap();
        writeln!(
            t,
            "mean RMSE {:.3} -> {:.3} after mapping {} (slope {:.3}, intercept {:.3})",
            rep.mean_rmse, rep.mean_rmse_after_mapping, rep.mapped_run, rep.mapping.slope, rep.mapping.intercept
        )
        .unwrap();
    }
    if let Some(s) = &r.sos {
        writeln!(t, "SOS parameter a = {:.4} (variance RMSE {:.4})", s.a, s.rmse).unwrap();
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(means: &[f64]) -> Vec<ConditionScore> {
        means
            .iter()
            .enumerate()
            .map(|(i, &m)| ConditionScore {
                condition_id: format!("C{i}"),
                n: 10,
                mean: m,
                sd: 0.5 + 0.1 * i as f64,
                ci95: 0.2,
            })
            .collect()
    }

    fn inputs(runs: Vec<(String, Vec<ConditionScore>)>) -> ReportInputs {
        ReportInputs {
            study_id: "s".into(),
            runs,
            reference: None,
            screening: None,
            bounds: (-3.0, 3.0),
            config: serde_json::json!({"seed": 1}),
        }
    }

    #[test]
    fn identical_runs_give_icc_one() {
        let s = scores(&[-2.0, -1.0, -0.5, 0.0]);
        let out = run_report(&inputs(vec![("a".into(), s.clone()), ("b".into(), s)])).unwrap();
        let rep = out.report.replication.unwrap();
        assert!((rep.icc.icc - 1.0).abs() < 1e-12);
        assert_eq!(out.scatter_csv.lines().count(), 5);
        assert_eq!(out.sos_csv.lines().count(), 5);
        assert_eq!(out.report.config["seed"], 1);
        assert!(out.text.contains("ICC(A,1): 1.000"));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(run_report(&inputs(vec![])).is_err());
        assert!(run_report(&inputs(vec![("a".into(), vec![])])).is_err());
    }

    #[test]
    fn reference_scatter() {
        let s = scores(&[-2.0, -1.0, -0.5]);
        let mut i = inputs(vec![("cmos".into(), s)]);
        i.reference = Some((
            "mos".into(),
            BTreeMap::from([("C0".into(), 1.5), ("C1".into(), 3.0), ("C2".into(), 3.9)]),
        ));
        let out = run_report(&i).unwrap();
        assert!(out.scatter_csv.contains("C1,-1,3\n"));
        assert!(out.report.reference_comparison.is_some());
    }
}
