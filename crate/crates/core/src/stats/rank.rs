use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::correlation::{average_ranks, pearson, CorrelationResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankDelta {
    pub rank_a: f64,
    pub rank_b: f64,
    pub delta: f64,
}

/// Rank 1 goes to the highest score; ties share their average rank.
pub fn quality_ranks(scores: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    let negated: Vec<f64> = scores.values().map(|v| -v).collect();
    scores
        .keys()
        .cloned()
        .zip(average_ranks(&negated))
        .collect()
}

/// Position change of each condition between two rankings (best quality = rank 1),
/// `delta = rank_a - rank_b`.
pub fn rank_order_delta(
    scores_a: &BTreeMap<String, f64>,
    scores_b: &BTreeMap<String, f64>,
) -> Result<BTreeMap<String, RankDelta>> {
    if !scores_a.keys().eq(scores_b.keys()) {
        let only_a: Vec<_> = scores_a.keys().filter(|k| !scores_b.contains_key(*k)).collect();
        let only_b: Vec<_> = scores_b.keys().filter(|k| !scores_a.contains_key(*k)).collect();
        return Err(Error::Input(format!(
            "condition sets differ (only in a: {only_a:?}, only in b: {only_b:?})"
        )));
    }
    let ra = quality_ranks(scores_a);
    let rb = quality_ranks(scores_b);
    Ok(ra
        .into_iter()
        .map(|(id, rank_a)| {
            let rank_b = rb[&id];
            (
                id,
                RankDelta {
                    rank_a,
                    rank_b,
                    delta: rank_a - rank_b,
                },
            )
        })
        .collect())
}

/// Pearson correlation (with p-value) of rank deltas against a per-condition
/// quality-dimension score.
pub fn delta_dimension_correlation(
    deltas: &BTreeMap<String, f64>,
    dimension_scores: &BTreeMap<String, f64>,
) -> Result<CorrelationResult> {
    if !deltas.keys().eq(dimension_scores.keys()) {
        return Err(Error::Input("delta and dimension condition sets differ".into()));
    }
    let d: Vec<f64> = deltas.values().copied().collect();
    let s: Vec<f64> = dimension_scores.values().copied().collect();
    pearson(&d, &s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn identical_scores_zero_delta() {
        let a = map(&[("C1", -1.0), ("C2", -2.0), ("C3", -0.5)]);
        let d = rank_order_delta(&a, &a).unwrap();
        assert!(d.values().all(|r| r.delta == 0.0));
        assert_eq!(d["C3"].rank_a, 1.0);
    }

    #[test]
    fn reversed_order() {
        let a = map(&[("C1", 3.0), ("C2", 2.0), ("C3", 1.0)]);
        let b = map(&[("C1", 1.0), ("C2", 2.0), ("C3", 3.0)]);
        let deltas: Vec<f64> = rank_order_delta(&a, &b).unwrap().values().map(|r| r.delta).collect();
        assert_eq!(deltas, vec![-2.0, 0.0, 2.0]);
    }

    #[test]
    fn mismatched_sets_rejected() {
        let a = map(&[("C1", 3.0), ("C2", 2.0)]);
        let b = map(&[("C1", 1.0), ("C9", 2.0)]);
        assert!(rank_order_delta(&a, &b).is_err());
    }

    #[test]
    fn dimension_correlation() {
        let deltas = map(&[("C1", -2.0), ("C2", 0.0), ("C3", 2.0), ("C4", 1.0)]);
        let dims: BTreeMap<String, f64> = deltas.iter().map(|(k, v)| (k.clone(), 0.5 * v)).collect();
        let r = delta_dimension_correlation(&deltas, &dims).unwrap();
        assert!((r.r - 1.0).abs() < 1e-12);
        assert_eq!(r.p_value, Some(0.0));

        let zeros = map(&[("C1", 0.0), ("C2", 0.0), ("C3", 0.0), ("C4", 0.0)]);
        assert!(matches!(
            delta_dimension_correlation(&zeros, &dims),
            Err(Error::Undefined(_))
        ));
    }
}
