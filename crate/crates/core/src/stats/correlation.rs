use serde::{Deserialize, Serialize};

use crate::dist;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrelationMethod {
    Pearson,
    Spearman,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub n: usize,
    pub method: CorrelationMethod,
    /// Two-sided p-value from the t distribution with n - 2 df; present when n > 2.
    pub p_value: Option<f64>,
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Usage(format!(
            "vectors differ in length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Usage("need at least two pairs".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite value in correlation input".into()));
    }
    for (name, v) in [("x", x), ("y", y)] {
        if v.iter().all(|&a| a == v[0]) {
            return Err(Error::Undefined(format!("{name} has zero variance")));
        }
    }
    Ok(())
}

fn product_moment(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Two-sided significance of a correlation coefficient.
pub fn correlation_p_value(r: f64, n: usize) -> Option<f64> {
    if n <= 2 {
        return None;
    }
    let df = (n - 2) as f64;
    let denom = 1.0 - r * r;
    if denom <= 0.0 {
        return Some(0.0);
    }
    Some(dist::t_two_sided_p(r * (df / denom).sqrt(), df))
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    check_pair(x, y)?;
    let r = product_moment(x, y);
    Ok(CorrelationResult {
        r,
        n: x.len(),
        method: CorrelationMethod::Pearson,
        p_value: correlation_p_value(r, x.len()),
    })
}

/// Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    check_pair(x, y)?;
    let r = product_moment(&average_ranks(x), &average_ranks(y));
    Ok(CorrelationResult {
        r,
        n: x.len(),
        method: CorrelationMethod::Spearman,
        p_value: correlation_p_value(r, x.len()),
    })
}

/// Ascending ranks starting at 1; tied values share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && values[idx[j]] == values[idx[i]] {
            j += 1;
        }
        // positions i..j (0-based) share rank mean(i+1..=j)
        let rank = (i + 1 + j) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "rmse: length mismatch");
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    (ss / a.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_correlations() {
        let x = [1.0, 2.0, 3.0];
        assert!((pearson(&x, &x).unwrap().r - 1.0).abs() < 1e-15);
        assert!((pearson(&x, &[3.0, 2.0, 1.0]).unwrap().r + 1.0).abs() < 1e-15);
        assert_eq!(spearman(&x, &[1.0, 4.0, 9.0]).unwrap().r, 1.0);
    }

    #[test]
    fn spearman_with_ties() {
        // average ranks of x: 1, 2.5, 2.5, 4 ; y: 1, 2, 3, 4
        // r = 4.5 / sqrt(4.5 * 5) = 0.948683...
        let r = spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap().r;
        assert!((r - 0.948_683_298_050_513_8).abs() < 1e-12);
        assert!((r - 0.9487).abs() < 5e-5);
    }

    #[test]
    fn zero_variance_is_undefined() {
        let err = pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap_err();
        assert!(matches!(err, Error::Undefined(_)));
        assert!(spearman(&[1.0, 2.0, 3.0], &[0.1, 0.1, 0.1]).is_err());
    }

    #[test]
    fn ranks() {
        assert_eq!(average_ranks(&[10.0, 30.0, 20.0, 20.0]), vec![1.0, 4.0, 2.5, 2.5]);
    }

    #[test]
    fn p_value_reasonable() {
        let r = pearson(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 1.0, 4.0, 3.0, 5.0]).unwrap();
        // r = 0.8, t = 0.8*sqrt(3/0.36) = 2.3094, df 3
        assert!((r.r - 0.8).abs() < 1e-12);
        let p = r.p_value.unwrap();
        assert!((p - 0.104_088_039).abs() < 1e-8, "p={p}");
    }
}
