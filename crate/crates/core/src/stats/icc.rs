use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Single-measure, absolute-agreement intraclass correlation from a two-way
/// model, together with the mean squares it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IccResult {
    pub icc: f64,
    /// Subjects (rows, e.g. conditions).
    pub n: usize,
    /// Raters (columns, e.g. runs).
    pub k: usize,
    pub ms_rows: f64,
    pub ms_cols: f64,
    pub ms_error: f64,
}

/// ICC(A,1) of an `n x k` matrix: rows are conditions, columns are runs.
pub fn icc_a1(matrix: &[Vec<f64>]) -> Result<IccResult> {
    let n = matrix.len();
    if n < 2 {
        return Err(Error::Usage("ICC needs at least two rows".into()));
    }
    let k = matrix[0].len();
    if k < 2 {
        return Err(Error::Usage("ICC needs at least two columns".into()));
    }
    for (i, row) in matrix.iter().enumerate() {
        if row.len() != k {
            return Err(Error::Input(format!(
                "incomplete matrix: row {i} has {} of {k} values",
                row.len()
            )));
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("incomplete matrix: missing value at ({i}, {j})")));
        }
    }

    let (nf, kf) = (n as f64, k as f64);
    let grand = matrix.iter().flatten().sum::<f64>() / (nf * kf);
    let row_means: Vec<f64> = matrix.iter().map(|r| r.iter().sum::<f64>() / kf).collect();
    let col_means: Vec<f64> = (0..k)
        .map(|j| matrix.iter().map(|r| r[j]).sum::<f64>() / nf)
        .collect();

    let ss_rows = kf * row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_cols = nf * col_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let mut ss_error = 0.0;
    for (row, rm) in matrix.iter().zip(&row_means) {
        for (x, cm) in row.iter().zip(&col_means) {
            ss_error += (x - rm - cm + grand).powi(2);
        }
    }

    let ms_rows = ss_rows / (nf - 1.0);
    let ms_cols = ss_cols / (kf - 1.0);
    let ms_error = ss_error / ((nf - 1.0) * (kf - 1.0));

    let denom = ms_rows + (kf - 1.0) * ms_error + kf / nf * (ms_cols - ms_error);
    if denom <= 0.0 {
        return Err(Error::Undefined("ICC denominator is zero (constant matrix)".into()));
    }
    Ok(IccResult {
        icc: (ms_rows - ms_error) / denom,
        n,
        k,
        ms_rows,
        ms_cols,
        ms_error,
    })
}
