use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dist;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Two-sided Welch (unequal variance) t-test. Both samples need at least two values.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Usage("Welch test needs at least two values per group".into()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    if se2 == 0.0 {
        let df = na + nb - 2.0;
        return Ok(if ma == mb {
            WelchTest { t: 0.0, df, p: 1.0 }
        } else {
            WelchTest {
                t: (ma - mb).signum() * f64::INFINITY,
                df,
                p: 0.0,
            }
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(WelchTest {
        t,
        df,
        p: dist::t_two_sided_p(t, df),
    })
}

/// Pairwise verdicts over a set of levels. Cells on the diagonal are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceMatrix {
    pub levels: Vec<String>,
    pub alpha: f64,
    pub corrected_alpha: f64,
    pub p_values: Vec<Vec<Option<f64>>>,
    pub significant: Vec<Vec<Option<bool>>>,
}

impl SignificanceMatrix {
    pub fn comparisons(&self) -> usize {
        let m = self.levels.len();
        m * (m.saturating_sub(1)) / 2
    }

    /// Verdicts of the upper triangle in row-major order.
    pub fn verdicts(&self) -> Vec<bool> {
        let m = self.levels.len();
        let mut out = Vec::with_capacity(self.comparisons());
        for i in 0..m {
            for j in i + 1..m {
                out.push(self.significant[i][j].unwrap_or(false));
            }
        }
        out
    }

    /// Builds a matrix from externally decided verdicts (p-values left empty).
    pub fn from_verdicts(levels: Vec<String>, verdict: impl Fn(usize, usize) -> bool) -> Self {
        let m = levels.len();
        let mut significant = vec![vec![None; m]; m];
        for i in 0..m {
            for j in i + 1..m {
                let v = verdict(i, j);
                significant[i][j] = Some(v);
                significant[j][i] = Some(v);
            }
        }
        Self {
            levels,
            alpha: f64::NAN,
            corrected_alpha: f64::NAN,
            p_values: vec![vec![None; m]; m],
            significant,
        }
    }
}

/// Welch tests between every unordered pair of groups, Bonferroni-corrected
/// over the C(m, 2) comparisons.
pub fn bonferroni_pairwise(
    groups: &BTreeMap<String, Vec<f64>>,
    alpha: f64,
) -> Result<SignificanceMatrix> {
    if groups.len() < 2 {
        return Err(Error::Usage("need at least two groups".into()));
    }
    if let Some((name, _)) = groups.iter().find(|(_, v)| v.len() < 2) {
        return Err(Error::Usage(format!("group {name} has fewer than two values")));
    }
    let levels: Vec<String> = groups.keys().cloned().collect();
    let values: Vec<&Vec<f64>> = groups.values().collect();
    let m = levels.len();
    let corrected_alpha = alpha / (m * (m - 1) / 2) as f64;
    let mut p_values = vec![vec![None; m]; m];
    let mut significant = vec![vec![None; m]; m];
    for i in 0..m {
        for j in i + 1..m {
            let test = welch_t_test(values[i], values[j])?;
            let sig = test.p < corrected_alpha;
            p_values[i][j] = Some(test.p);
            p_values[j][i] = Some(test.p);
            significant[i][j] = Some(sig);
            significant[j][i] = Some(sig);
        }
    }
    Ok(SignificanceMatrix {
        levels,
        alpha,
        corrected_alpha,
        p_values,
        significant,
    })
}

/// Fraction of level pairs on which every run reaches the same verdict.
pub fn conclusion_agreement(runs: &[SignificanceMatrix]) -> Result<f64> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Usage("no runs to compare".into()))?;
    if let Some(other) = runs.iter().find(|r| r.levels != first.levels) {
        return Err(Error::Input(format!(
            "mismatched level sets: {:?} vs {:?}",
            first.levels, other.levels
        )));
    }
    let verdicts: Vec<Vec<bool>> = runs.iter().map(SignificanceMatrix::verdicts).collect();
    let total = verdicts[0].len();
    if total == 0 {
        return Err(Error::Usage("need at least two levels".into()));
    }
    let agreed = (0..total)
        .filter(|&p| verdicts.iter().all(|v| v[p] == verdicts[0][p]))
        .count();
    Ok(agreed as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn levels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("N{i}")).collect()
    }

    #[test]
    fn seven_groups_make_21_comparisons() {
        let groups: BTreeMap<String, Vec<f64>> = (0..7)
            .map(|i| (format!("noise{i}"), vec![i as f64, i as f64 + 0.5, i as f64 + 0.25]))
            .collect();
        let m = bonferroni_pairwise(&groups, 0.05).unwrap();
        assert_eq!(m.comparisons(), 21);
        assert_eq!(m.verdicts().len(), 21);
        assert!((m.corrected_alpha - 0.05 / 21.0).abs() < 1e-15);
        for i in 0..7 {
            assert_eq!(m.significant[i][i], None);
            for j in 0..7 {
                assert_eq!(m.significant[i][j], m.significant[j][i]);
            }
        }
    }

    #[test]
    fn identical_groups_not_significant() {
        let g = vec![1.0, 2.0, 3.0, 2.5];
        let groups = BTreeMap::from([("a".to_string(), g.clone()), ("b".to_string(), g)]);
        let m = bonferroni_pairwise(&groups, 0.05).unwrap();
        assert_eq!(m.significant[0][1], Some(false));
        assert_eq!(m.p_values[0][1], Some(1.0));
    }

    #[test]
    fn welch_reference_value() {
        let a = [27.5, 21.0, 19.0, 23.6, 17.0, 17.9, 16.9, 20.1, 21.9, 22.6, 23.1, 19.6, 19.0, 21.7, 21.4];
        let b = [27.1, 22.0, 20.8, 23.4, 23.4, 23.5, 25.8, 22.0, 24.8, 20.2, 21.9, 22.1, 22.9, 20.5, 24.4];
        let w = welch_t_test(&a, &b).unwrap();
        assert!((w.t + 2.455_356_398).abs() < 1e-8, "t={}", w.t);
        assert!((w.df - 24.988_529_29).abs() < 1e-6, "df={}", w.df);
        assert!((w.p - 0.021_378_001).abs() < 1e-8, "p={}", w.p);
    }

    #[test]
    fn short_group_rejected() {
        let groups = BTreeMap::from([("a".to_string(), vec![1.0]), ("b".to_string(), vec![1.0, 2.0])]);
        assert!(bonferroni_pairwise(&groups, 0.05).is_err());
    }

    #[test]
    fn agreement_counts() {
        let base = SignificanceMatrix::from_verdicts(levels(7), |i, j| (i + j) % 2 == 0);
        assert_eq!(conclusion_agreement(&[base.clone(), base.clone()]).unwrap(), 1.0);

        // flip six of the 21 pairs in one run
        let mut flipped = 0;
        let pairs: Vec<(usize, usize)> = (0..7).flat_map(|i| (i + 1..7).map(move |j| (i, j))).collect();
        let flip: Vec<(usize, usize)> = pairs.iter().copied().step_by(3).take(6).collect();
        let other = SignificanceMatrix::from_verdicts(levels(7), |i, j| {
            let v = (i + j) % 2 == 0;
            if flip.contains(&(i, j)) {
                !v
            } else {
                v
            }
        });
        for (a, b) in base.verdicts().iter().zip(other.verdicts()) {
            if *a != b {
                flipped += 1;
            }
        }
        assert_eq!(flipped, 6);
        let agreement = conclusion_agreement(&[base.clone(), base, other]).unwrap();
        assert!((agreement - 15.0 / 21.0).abs() < 1e-15);
        assert!((agreement - 0.714).abs() < 1e-3);

        let three = SignificanceMatrix::from_verdicts(levels(3), |_, _| true);
        let three_b = SignificanceMatrix::from_verdicts(levels(3), |i, j| (i, j) != (0, 2));
        assert!((conclusion_agreement(&[three, three_b]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn mismatched_levels_rejected() {
        let a = SignificanceMatrix::from_verdicts(levels(3), |_, _| true);
        let b = SignificanceMatrix::from_verdicts(levels(4), |_, _| true);
        assert!(conclusion_agreement(&[a, b]).is_err());
    }
}
