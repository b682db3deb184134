//! Two-way between-subjects ANOVA with interaction.
//!
//! Balanced designs use the classical decomposition. Unbalanced designs use
//! the unweighted-means approximation: effects are computed on cell means and
//! scaled by the harmonic mean of the cell sizes, while the residual is the
//! exact pooled within-cell sum of squares.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dist;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Effect {
    FactorA,
    FactorB,
    Interaction,
    Residual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaRow {
    pub effect: Effect,
    pub ss: f64,
    pub df: f64,
    pub ms: f64,
    pub f: Option<f64>,
    pub p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaTable {
    pub levels_a: Vec<String>,
    pub levels_b: Vec<String>,
    pub balanced: bool,
    pub rows: Vec<AnovaRow>,
}

impl AnovaTable {
    pub fn row(&self, effect: Effect) -> &AnovaRow {
        self.rows
            .iter()
            .find(|r| r.effect == effect)
            .expect("table always carries all four effects")
    }

    pub fn significant(&self, effect: Effect, alpha: f64) -> bool {
        self.row(effect).p.is_some_and(|p| p < alpha)
    }
}

#[derive(Default, Clone)]
struct Cell {
    n: usize,
    sum: f64,
    values: Vec<f64>,
}

impl Cell {
    fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }
}

pub fn two_way_anova<A, B>(observations: &[(A, B, f64)]) -> Result<AnovaTable>
where
    A: AsRef<str>,
    B: AsRef<str>,
{
    let levels_a: Vec<String> = observations
        .iter()
        .map(|o| o.0.as_ref().to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let levels_b: Vec<String> = observations
        .iter()
        .map(|o| o.1.as_ref().to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if levels_a.len() < 2 || levels_b.len() < 2 {
        return Err(Error::Usage("each factor needs at least two levels".into()));
    }

    let mut cells: BTreeMap<(&str, &str), Cell> = BTreeMap::new();
    for (a, b, v) in observations {
        if !v.is_finite() {
            return Err(Error::Input("non-finite observation".into()));
        }
        let cell = cells.entry((a.as_ref(), b.as_ref())).or_default();
        cell.n += 1;
        cell.sum += v;
        cell.values.push(*v);
    }
    for a in &levels_a {
        for b in &levels_b {
            if !cells.contains_key(&(a.as_str(), b.as_str())) {
                return Err(Error::Input(format!("empty cell ({a}, {b})")));
            }
        }
    }

    let (ka, kb) = (levels_a.len(), levels_b.len());
    let n_total = observations.len();
    let df_error = n_total as f64 - (ka * kb) as f64;
    if df_error < 1.0 {
        return Err(Error::Usage(
            "no within-cell replication; interaction and residual are not separable".into(),
        ));
    }

    let mean_of = |a: &str, b: &str| cells[&(a, b)].mean();
    let first_n = cells.values().next().map(|c| c.n).unwrap_or(0);
    let balanced = cells.values().all(|c| c.n == first_n);
    // harmonic mean of cell sizes; equals the common size when balanced
    let n_h = (ka * kb) as f64 / cells.values().map(|c| 1.0 / c.n as f64).sum::<f64>();

    let grand = if balanced {
        observations.iter().map(|o| o.2).sum::<f64>() / n_total as f64
    } else {
        cells.values().map(Cell::mean).sum::<f64>() / (ka * kb) as f64
    };
    let marg_a: Vec<f64> = levels_a
        .iter()
        .map(|a| levels_b.iter().map(|b| mean_of(a, b)).sum::<f64>() / kb as f64)
        .collect();
    let marg_b: Vec<f64> = levels_b
        .iter()
        .map(|b| levels_a.iter().map(|a| mean_of(a, b)).sum::<f64>() / ka as f64)
        .collect();

    let ss_a = n_h * kb as f64 * marg_a.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_b = n_h * ka as f64 * marg_b.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let mut ss_ab = 0.0;
    for (i, a) in levels_a.iter().enumerate() {
        for (j, b) in levels_b.iter().enumerate() {
            ss_ab += (mean_of(a, b) - marg_a[i] - marg_b[j] + grand).powi(2);
        }
    }
    ss_ab *= n_h;
    let ss_e: f64 = cells
        .values()
        .map(|c| {
            let m = c.mean();
            c.values.iter().map(|v| (v - m).powi(2)).sum::<f64>()
        })
        .sum();

    let ms_e = ss_e / df_error;
    let effect_row = |effect, ss: f64, df: f64| {
        let ms = ss / df;
        let (f, p) = if ms_e > 0.0 {
            let f = ms / ms_e;
            (Some(f), Some(dist::f_sf(f, df, df_error)))
        } else {
            (None, None)
        };
        AnovaRow {
            effect,
            ss,
            df,
            ms,
            f,
            p,
        }
    };

    let rows = vec![
        effect_row(Effect::FactorA, ss_a, (ka - 1) as f64),
        effect_row(Effect::FactorB, ss_b, (kb - 1) as f64),
        effect_row(Effect::Interaction, ss_ab, ((ka - 1) * (kb - 1)) as f64),
        AnovaRow {
            effect: Effect::Residual,
            ss: ss_e,
            df: df_error,
            ms: ms_e,
            f: None,
            p: None,
        },
    ];
    Ok(AnovaTable {
        levels_a,
        levels_b,
        balanced,
        rows,
    })
}
