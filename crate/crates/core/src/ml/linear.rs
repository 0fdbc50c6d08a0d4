use serde::{Deserialize, Serialize};

use super::MlError;

/// Ridge penalty used when the normal equations are singular.
pub const RIDGE_FALLBACK: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn predict(&self, features: &[f64]) -> f64 {
        self.coefficients
            .iter()
            .zip(features)
            .map(|(c, x)| c * x)
            .sum::<f64>()
            + self.intercept
    }
}

/// Ordinary least squares through the normal equations `(XᵀX)θ = Xᵀy`, with
/// an intercept column appended. Falls back to a tiny ridge penalty on the
/// coefficients when the system is rank deficient.
pub fn fit_linear(rows: &[(Vec<f64>, f64)]) -> Result<LinearModel, MlError> {
    let first = rows.first().ok_or(MlError::Empty)?;
    let d = first.0.len();
    for (i, (x, y)) in rows.iter().enumerate() {
        if x.len() != d {
            return Err(MlError::Dimension {
                row: i,
                expected: d,
                got: x.len(),
            });
        }
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(MlError::NonFinite { row: i });
        }
    }

    let p = d + 1;
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for (x, y) in rows {
        let aug = |j: usize| if j < d { x[j] } else { 1.0 };
        for a in 0..p {
            let xa = aug(a);
            xty[a] += xa * y;
            for b in a..p {
                xtx[a][b] += xa * aug(b);
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtx[a][b] = xtx[b][a];
        }
    }

    let theta = match solve(xtx.clone(), xty.clone()) {
        Some(t) => t,
        None => {
            for (j, row) in xtx.iter_mut().enumerate().take(d) {
                row[j] += RIDGE_FALLBACK;
            }
            solve(xtx, xty).ok_or(MlError::Singular)?
        }
    };
    Ok(LinearModel {
        coefficients: theta[..d].to_vec(),
        intercept: theta[d],
    })
}

/// Gaussian elimination with partial pivoting. `None` when a pivot is
/// negligible relative to the matrix scale.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1.0);
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}
