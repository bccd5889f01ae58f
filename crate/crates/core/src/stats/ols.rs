//! Ordinary least squares for covariate baselines.
//!
//! The production path factors the design matrix (QR for the rank check, SVD
//! for the solve) instead of forming XᵀX, so near-collinear covariates fail
//! loudly rather than producing garbage coefficients.
//! [`normal_equations_fit`] is a deliberately independent brute-force route
//! kept for cross-checking; never replace one with the other.

use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;

use super::StatsError;

/// Fitted linear baseline. `slopes[i]` pairs with `feature_names[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub feature_names: Vec<String>,
    pub intercept: f64,
    pub slopes: Vec<f64>,
    /// In-sample coefficient of determination of the fitted values.
    pub r_squared: f64,
    pub fitted: Vec<f64>,
}

/// Relative diagonal cutoff below which a QR factor is treated as rank
/// deficient.
const RANK_TOL: f64 = 1e-10;

fn design_matrix(features: ArrayView2<'_, f64>, target: &[f64]) -> Result<DMatrix<f64>, StatsError> {
    let (n, p) = features.dim();
    if n != target.len() {
        return Err(StatsError::LengthMismatch {
            a: n,
            b: target.len(),
        });
    }
    if n <= p + 1 {
        return Err(StatsError::Underdetermined { n, p: p + 1 });
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite("features"));
    }
    if target.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite("target"));
    }
    let mut x = DMatrix::zeros(n, p + 1);
    for i in 0..n {
        x[(i, 0)] = 1.0;
        for j in 0..p {
            x[(i, j + 1)] = features[(i, j)];
        }
    }
    Ok(x)
}

/// Fits `target ≈ intercept + Σ slopeᵢ·featureᵢ` by least squares.
///
/// `features` is n×p with one row per observation; callers pass complete
/// cases only. Rank deficiency is reported as [`StatsError::Collinear`]
/// naming the offending column: in an unpivoted QR factorization, the first
/// vanishing diagonal at position j means column j is a linear combination of
/// the columns before it, so for duplicated covariates the *second* copy is
/// named.
pub fn ols_baseline(
    feature_names: &[String],
    features: ArrayView2<'_, f64>,
    target: &[f64],
) -> Result<OlsFit, StatsError> {
    let p = features.ncols();
    if feature_names.len() != p {
        return Err(StatsError::LengthMismatch {
            a: feature_names.len(),
            b: p,
        });
    }
    let x = design_matrix(features, target)?;

    let r = x.clone().qr().r();
    let max_diag = (0..=p).map(|j| r[(j, j)].abs()).fold(0.0f64, f64::max);
    for j in 0..=p {
        if r[(j, j)].abs() <= RANK_TOL * max_diag {
            let column = if j == 0 {
                "intercept".to_string()
            } else {
                feature_names[j - 1].clone()
            };
            return Err(StatsError::Collinear { column });
        }
    }

    let y = DVector::from_column_slice(target);
    let svd = x.clone().svd(true, true);
    let beta = svd
        .solve(&y, RANK_TOL)
        .map_err(|e| StatsError::InvalidReport(e.to_string()))?;
    let fitted_v = &x * &beta;
    let fitted: Vec<f64> = fitted_v.iter().copied().collect();
    let r_squared = super::r_squared(target, &fitted)?;
    Ok(OlsFit {
        feature_names: feature_names.to_vec(),
        intercept: beta[0],
        slopes: beta.iter().skip(1).copied().collect(),
        r_squared,
        fitted,
    })
}

/// Least squares via explicit normal equations `XᵀX β = Xᵀy`, solved with
/// hand-rolled Gaussian elimination under partial pivoting. Numerically
/// cruder than [`ols_baseline`] by design — it exists as an independent
/// oracle for cross-checking, and its agreement with the factored route is
/// asserted in tests. Returns `[intercept, slopes…]`.
pub fn normal_equations_fit(
    features: ArrayView2<'_, f64>,
    target: &[f64],
) -> Result<Vec<f64>, StatsError> {
    let x = design_matrix(features, target)?;
    let (n, m) = (x.nrows(), x.ncols());

    // a = XᵀX augmented with Xᵀy as the last column
    let mut a = vec![vec![0.0f64; m + 1]; m];
    for i in 0..m {
        for j in 0..m {
            let mut s = 0.0;
            for k in 0..n {
                s += x[(k, i)] * x[(k, j)];
            }
            a[i][j] = s;
        }
        let mut s = 0.0;
        for k in 0..n {
            s += x[(k, i)] * target[k];
        }
        a[i][m] = s;
    }

    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col].abs() < 1e-12 {
            return Err(StatsError::Collinear {
                column: format!("column {col}"),
            });
        }
        a.swap(col, pivot);
        for row in col + 1..m {
            let f = a[row][col] / a[col][col];
            for k in col..=m {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    let mut beta = vec![0.0f64; m];
    for col in (0..m).rev() {
        let mut s = a[col][m];
        for k in col + 1..m {
            s -= a[col][k] * beta[k];
        }
        beta[col] = s / a[col][col];
    }
    Ok(beta)
}

/// In-sample R² of a covariate baseline against `target`, as a convenience
/// for report assembly. `None` when the fit is not computable (too few
/// complete cases or collinear covariates) — callers surface those rows
/// with an empty cell rather than failing the whole report.
pub fn baseline_r_squared(
    feature_names: &[String],
    features: ArrayView2<'_, f64>,
    target: &[f64],
) -> Option<f64> {
    ols_baseline(feature_names, features, target)
        .ok()
        .map(|f| f.r_squared)
}
