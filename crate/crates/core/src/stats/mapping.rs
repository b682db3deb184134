use serde::{Deserialize, Serialize};

use super::correlation::rmse;
use crate::error::{Error, Result};

/// First-order (affine) mapping `target ≈ slope * source + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearMap {
    pub slope: f64,
    pub intercept: f64,
    pub rmse_before: f64,
    pub rmse_after: f64,
}

impl LinearMap {
    pub fn apply(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

/// Ordinary least squares fit of `target` on `source`.
pub fn fit_linear_map(source: &[f64], target: &[f64]) -> Result<LinearMap> {
    if source.len() != target.len() {
        return Err(Error::Usage("source and target differ in length".into()));
    }
    if source.len() < 2 {
        return Err(Error::Usage("need at least two points".into()));
    }
    if source.iter().all(|&v| v == source[0]) {
        return Err(Error::Undefined("constant source vector".into()));
    }
    let n = source.len() as f64;
    let mx = source.iter().sum::<f64>() / n;
    let my = target.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in source.iter().zip(target) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mapped: Vec<f64> = source.iter().map(|x| slope * x + intercept).collect();
    Ok(LinearMap {
        slope,
        intercept,
        rmse_before: rmse(source, target),
        rmse_after: rmse(&mapped, target),
    })
}
