//! Comparison and reliability statistics over per-condition score tables.

pub mod anova;
pub mod correlation;
pub mod icc;
pub mod mapping;
pub mod pairwise;
pub mod rank;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use anova::{two_way_anova, AnovaRow, AnovaTable, Effect};
pub use correlation::{average_ranks, pearson, rmse, spearman, CorrelationMethod, CorrelationResult};
pub use icc::{icc_a1, IccResult};
pub use mapping::{fit_linear_map, LinearMap};
pub use pairwise::{bonferroni_pairwise, conclusion_agreement, welch_t_test, SignificanceMatrix, WelchTest};
pub use rank::{delta_dimension_correlation, quality_ranks, rank_order_delta, RankDelta};

use crate::error::{Error, Result};

/// Aligns score tables on their shared condition ids. All tables must cover
/// exactly the same conditions.
pub fn align_tables(tables: &[&BTreeMap<String, f64>]) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let first = tables
        .first()
        .ok_or_else(|| Error::Usage("no score tables given".into()))?;
    for (i, t) in tables.iter().enumerate().skip(1) {
        if !t.keys().eq(first.keys()) {
            let missing: Vec<_> = first.keys().filter(|k| !t.contains_key(*k)).collect();
            let extra: Vec<_> = t.keys().filter(|k| !first.contains_key(*k)).collect();
            return Err(Error::Input(format!(
                "table {i} condition set differs from table 0 (missing {missing:?}, extra {extra:?})"
            )));
        }
    }
    let ids: Vec<String> = first.keys().cloned().collect();
    let columns = tables.iter().map(|t| t.values().copied().collect()).collect();
    Ok((ids, columns))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub a: String,
    pub b: String,
    pub n: usize,
    pub pearson: f64,
    pub spearman: f64,
    pub rmse: f64,
    /// Mapping of `b` onto `a`.
    pub map_b_to_a: LinearMap,
}

pub fn compare_columns(a_name: &str, a: &[f64], b_name: &str, b: &[f64]) -> Result<PairComparison> {
    Ok(PairComparison {
        a: a_name.to_string(),
        b: b_name.to_string(),
        n: a.len(),
        pearson: pearson(a, b)?.r,
        spearman: spearman(a, b)?.r,
        rmse: rmse(a, b),
        map_b_to_a: fit_linear_map(b, a)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub runs: Vec<String>,
    pub conditions: usize,
    pub pairs: Vec<PairComparison>,
    pub icc: IccResult,
    /// Mean of all pairwise RMSEs.
    pub mean_rmse: f64,
    pub mapped_run: String,
    /// Mapping of the mapped run onto the mean of the remaining runs.
    pub mapping: LinearMap,
    pub mean_rmse_after_mapping: f64,
}

fn mean_pairwise_rmse(columns: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    for i in 0..columns.len() {
        for j in i + 1..columns.len() {
            total += rmse(&columns[i], &columns[j]);
            count += 1;
        }
    }
    total / count as f64
}

/// Test-retest summary over several runs of the same study: pairwise
/// correlations and RMSE, ICC(A,1), and the effect of affinely mapping one
/// run (default: the last) onto the mean of the others.
pub fn replication_summary(
    names: &[String],
    tables: &[&BTreeMap<String, f64>],
    mapped_run: Option<usize>,
) -> Result<ReplicationSummary> {
    if tables.len() < 2 || names.len() != tables.len() {
        return Err(Error::Usage("need at least two named runs".into()));
    }
    let (ids, columns) = align_tables(tables)?;
    let mapped = mapped_run.unwrap_or(tables.len() - 1);
    if mapped >= tables.len() {
        return Err(Error::Usage(format!("mapped run index {mapped} out of range")));
    }

    let mut pairs = Vec::new();
    for i in 0..columns.len() {
        for j in i + 1..columns.len() {
            pairs.push(compare_columns(&names[i], &columns[i], &names[j], &columns[j])?);
        }
    }
    let matrix: Vec<Vec<f64>> = (0..ids.len())
        .map(|c| columns.iter().map(|col| col[c]).collect())
        .collect();
    let icc = icc_a1(&matrix)?;

    let others_mean: Vec<f64> = (0..ids.len())
        .map(|c| {
            let (sum, n) = columns
                .iter()
                .enumerate()
                .filter(|(r, _)| *r != mapped)
                .fold((0.0, 0), |(s, n), (_, col)| (s + col[c], n + 1));
            sum / n as f64
        })
        .collect();
    let mapping = fit_linear_map(&columns[mapped], &others_mean)?;
    let mut mapped_columns = columns.clone();
    mapped_columns[mapped] = columns[mapped].iter().map(|&x| mapping.apply(x)).collect();

    Ok(ReplicationSummary {
        runs: names.to_vec(),
        conditions: ids.len(),
        pairs,
        icc,
        mean_rmse: mean_pairwise_rmse(&columns),
        mapped_run: names[mapped].clone(),
        mapping,
        mean_rmse_after_mapping: mean_pairwise_rmse(&mapped_columns),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(values: &[f64]) -> BTreeMap<String, f64> {
        values
            .iter()
            .enumerate()
            .map(|(i, v)| (format!("C{i:02}"), *v))
            .collect()
    }

    #[test]
    fn identical_runs() {
        let t = table(&[-2.0, -1.2, -0.4, -0.9]);
        let names = vec!["r1".to_string(), "r2".to_string()];
        let s = replication_summary(&names, &[&t, &t], None).unwrap();
        assert!((s.icc.icc - 1.0).abs() < 1e-12);
        assert!((s.pairs[0].pearson - 1.0).abs() < 1e-12);
        assert_eq!(s.mean_rmse, 0.0);
    }

    #[test]
    fn offset_run_is_corrected_by_mapping() {
        let a = table(&[-2.0, -1.2, -0.4, -0.9, -1.6]);
        let b = table(&[-1.9, -1.3, -0.5, -0.8, -1.7]);
        let c: BTreeMap<String, f64> = a.iter().map(|(k, v)| (k.clone(), v + 0.3)).collect();
        let names: Vec<String> = ["r1", "r2", "r3"].iter().map(|s| s.to_string()).collect();
        let s = replication_summary(&names, &[&a, &b, &c], None).unwrap();
        assert_eq!(s.pairs.len(), 3);
        assert_eq!(s.mapped_run, "r3");
        assert!(s.mean_rmse_after_mapping < s.mean_rmse);
    }

    #[test]
    fn misaligned_tables_rejected() {
        let a = table(&[1.0, 2.0, 3.0]);
        let b = table(&[1.0, 2.0]);
        assert!(align_tables(&[&a, &b]).is_err());
    }
}
