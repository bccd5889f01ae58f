//! Cross-method agreement and bilateral symmetry analyses.

use serde::{Deserialize, Serialize};

use super::{check_pair, limits_of_agreement, mae, ols_baseline, pearson_r, r_squared, StatsError};
use crate::tables::{CohortManifest, PredictionTable};

/// Agreement between two measures of the same quantity, after calibrating
/// the second onto the first by linear regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub n: usize,
    pub slope: f64,
    pub intercept: f64,
    /// MAE between the calibrated values `slope·a + intercept` and `b`.
    pub mae: f64,
    pub loa_lower: f64,
    pub loa_upper: f64,
    /// R² between the calibrated values and `b`.
    pub r_squared: f64,
}

impl AgreementRow {
    /// Regression term formatted like `0.42x - 0.3`.
    pub fn term(&self) -> String {
        let sign = if self.intercept < 0.0 { '-' } else { '+' };
        format!(
            "{:.2}x {} {:.1}",
            self.slope,
            sign,
            self.intercept.abs()
        )
    }
}

/// Fits `b ≈ slope·a + intercept` by least squares, then reports the
/// agreement of the calibrated values with `b`. The calibration step mirrors
/// how a systematically offset second measure is compared against a
/// reference: the linear term absorbs scale/offset, and MAE/LoA/R² describe
/// what disagreement remains.
pub fn agreement_analysis(values_a: &[f64], values_b: &[f64]) -> Result<AgreementRow, StatsError> {
    check_pair(values_a, values_b, 3)?;
    let n = values_a.len();
    let features = ndarray::Array2::from_shape_vec((n, 1), values_a.to_vec())
        .expect("length checked above");
    let fit = ols_baseline(&["a".to_string()], features.view(), values_b)?;
    let loa = limits_of_agreement(values_b, &fit.fitted)?;
    Ok(AgreementRow {
        n,
        slope: fit.slopes[0],
        intercept: fit.intercept,
        mae: mae(values_b, &fit.fitted)?,
        loa_lower: loa.0,
        loa_upper: loa.1,
        r_squared: r_squared(values_b, &fit.fitted)?,
    })
}

/// Bilateral symmetry of a paired field: how strongly left and right
/// references correlate with each other, and how strongly each side's
/// network prediction correlates with its own reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryRow {
    pub field_a: String,
    pub field_b: String,
    /// Subjects with all four series present.
    pub n: usize,
    pub r_ab: f64,
    pub r_a_pred: f64,
    pub r_b_pred: f64,
}

/// Computes a [`SymmetryRow`] over subjects that have both reference values
/// in the manifest and a prediction in each field's table.
pub fn symmetry_analysis(
    manifest: &CohortManifest,
    tables: &[&PredictionTable],
    field_a: &str,
    field_b: &str,
) -> Result<SymmetryRow, StatsError> {
    let find = |field: &str| {
        tables
            .iter()
            .find(|t| t.field_name == field)
            .ok_or_else(|| StatsError::InvalidReport(format!("no prediction table for '{field}'")))
    };
    let table_a = find(field_a)?;
    let table_b = find(field_b)?;

    let mut ref_a = Vec::new();
    let mut ref_b = Vec::new();
    let mut pred_a = Vec::new();
    let mut pred_b = Vec::new();
    for rec in manifest.records() {
        let id = rec.subject_id.as_str();
        let (Some(a), Some(b)) = (manifest.value(id, field_a), manifest.value(id, field_b)) else {
            continue;
        };
        let (Some(ra), Some(rb)) = (table_a.row_for(id), table_b.row_for(id)) else {
            continue;
        };
        ref_a.push(a);
        ref_b.push(b);
        pred_a.push(ra.prediction);
        pred_b.push(rb.prediction);
    }
    if ref_a.len() < 3 {
        return Err(StatsError::TooFew {
            needed: 3,
            got: ref_a.len(),
        });
    }
    Ok(SymmetryRow {
        field_a: field_a.to_string(),
        field_b: field_b.to_string(),
        n: ref_a.len(),
        r_ab: pearson_r(&ref_a, &ref_b)?,
        r_a_pred: pearson_r(&ref_a, &pred_a)?,
        r_b_pred: pearson_r(&ref_b, &pred_b)?,
    })
}
