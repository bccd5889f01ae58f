//! Agreement and fit statistics for regression predictions: MAE, 95% limits
//! of agreement, R², Pearson correlation, ROC AUC, threshold classification,
//! linear baselines, cross-method agreement, and bilateral symmetry.
//!
//! Sign convention: differences are always `prediction − reference`, so a
//! positive bias means over-prediction and interval signs are comparable
//! across every report this module emits.

mod agreement;
mod ols;
mod report;

pub use agreement::{agreement_analysis, symmetry_analysis, AgreementRow, SymmetryRow};
pub use ols::{normal_equations_fit, ols_baseline, OlsFit};
pub use report::{render_text_report, write_agreement_csv, write_eval_reports_csv, write_symmetry_csv};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum StatsError {
    #[error("length mismatch: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("need at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("{0} is constant; statistic undefined")]
    ConstantInput(&'static str),
    #[error("both classes must be present (got {pos} positive, {neg} negative)")]
    SingleClass { pos: usize, neg: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("design matrix is rank deficient: column '{column}' is collinear with earlier columns")]
    Collinear { column: String },
    #[error("need more observations ({n}) than coefficients ({p})")]
    Underdetermined { n: usize, p: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("invalid report: {0}")]
    InvalidReport(String),
}

fn check_pair(a: &[f64], b: &[f64], min_len: usize) -> Result<(), StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    if a.len() < min_len {
        return Err(StatsError::TooFew {
            needed: min_len,
            got: a.len(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite("first input"));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite("second input"));
    }
    Ok(())
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (n−1 denominator).
pub(crate) fn sample_sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Mean absolute error between paired values.
pub fn mae(reference: &[f64], prediction: &[f64]) -> Result<f64, StatsError> {
    check_pair(reference, prediction, 1)?;
    Ok(reference
        .iter()
        .zip(prediction)
        .map(|(r, p)| (r - p).abs())
        .sum::<f64>()
        / reference.len() as f64)
}

/// Coefficient of determination: `1 − Σ(ref−pred)² / Σ(ref−mean(ref))²`.
/// Ranges from 1.0 for a perfect fit down to negative values; errors when the
/// reference is constant (denominator zero).
pub fn r_squared(reference: &[f64], prediction: &[f64]) -> Result<f64, StatsError> {
    check_pair(reference, prediction, 2)?;
    let m = mean(reference);
    let ss_tot: f64 = reference.iter().map(|r| (r - m).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(StatsError::ConstantInput("reference"));
    }
    let ss_res: f64 = reference
        .iter()
        .zip(prediction)
        .map(|(r, p)| (r - p).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// 95% limits of agreement over differences `d = prediction − reference`:
/// `mean(d) ± 1.96·SD(d)` with sample SD. Returned as `(lower, upper)`.
/// The 1.96 multiplier is fixed; no small-sample correction is applied.
pub fn limits_of_agreement(reference: &[f64], prediction: &[f64]) -> Result<(f64, f64), StatsError> {
    check_pair(reference, prediction, 2)?;
    let d: Vec<f64> = prediction
        .iter()
        .zip(reference)
        .map(|(p, r)| p - r)
        .collect();
    let m = mean(&d);
    let sd = sample_sd(&d);
    Ok((m - 1.96 * sd, m + 1.96 * sd))
}

/// Pearson's correlation coefficient (sample covariance over SD product).
pub fn pearson_r(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    check_pair(a, b, 2)?;
    let (ma, mb) = (mean(a), mean(b));
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 {
        return Err(StatsError::ConstantInput("first input"));
    }
    if vb == 0.0 {
        return Err(StatsError::ConstantInput("second input"));
    }
    Ok(cov / (va * vb).sqrt())
}

/// ROC AUC in the Mann–Whitney formulation,
/// `P(score_pos > score_neg) + ½·P(tie)`, computed via rank sums with
/// average ranks for ties. O(n log n).
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, StatsError> {
    if scores.len() != labels.len() {
        return Err(StatsError::LengthMismatch {
            a: scores.len(),
            b: labels.len(),
        });
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite("scores"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(StatsError::SingleClass {
            pos: n_pos,
            neg: n_neg,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].partial_cmp(&scores[j]).unwrap());
    // average ranks over tie groups (1-based ranks)
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// ROC AUC by explicit pairwise counting. O(n²); kept as an independent
/// route that must agree with [`roc_auc`] — do not fold the two together.
pub fn roc_auc_pairwise(scores: &[f64], labels: &[bool]) -> Result<f64, StatsError> {
    if scores.len() != labels.len() {
        return Err(StatsError::LengthMismatch {
            a: scores.len(),
            b: labels.len(),
        });
    }
    let pos: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(&s, _)| s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| !l)
        .map(|(&s, _)| s)
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(StatsError::SingleClass {
            pos: pos.len(),
            neg: neg.len(),
        });
    }
    let mut wins = 0.0f64;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (pos.len() * neg.len()) as f64)
}

/// Binary classification metrics at a fixed threshold. Scores exactly at the
/// threshold classify as negative (strict `>`), which keeps confusion counts
/// bit-reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMetrics {
    pub threshold: f64,
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub auc: f64,
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
}

/// Computes [`ThresholdMetrics`] for `scores` against boolean `labels`.
pub fn threshold_metrics(
    scores: &[f64],
    labels: &[bool],
    threshold: f64,
) -> Result<ThresholdMetrics, StatsError> {
    let auc = roc_auc(scores, labels)?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s > threshold, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(ThresholdMetrics {
        threshold,
        accuracy: (tp + tn) as f64 / scores.len() as f64,
        sensitivity: tp as f64 / (tp + fn_) as f64,
        specificity: tn as f64 / (tn + fp) as f64,
        auc,
        true_pos: tp,
        false_pos: fp,
        true_neg: tn,
        false_neg: fn_,
    })
}

/// Per-field evaluation summary (one report row).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub field_name: String,
    pub n: usize,
    pub unit: String,
    pub min: f64,
    pub max: f64,
    /// Mean of the reference values.
    pub mean: f64,
    /// Sample SD of the reference values.
    pub sd: f64,
    pub mae: f64,
    pub loa_lower: f64,
    pub loa_upper: f64,
    pub r_squared: f64,
    /// Present when the field has a configured classification threshold.
    pub threshold_metrics: Option<ThresholdMetrics>,
    /// In-sample R² of the covariate linear baseline, when computable.
    pub baseline_r_squared: Option<f64>,
}

/// Builds the per-field report row from pooled out-of-fold predictions.
pub fn evaluate_field(
    field_name: &str,
    unit: &str,
    reference: &[f64],
    prediction: &[f64],
    threshold: Option<f64>,
    baseline_r_squared: Option<f64>,
) -> Result<EvalReport, StatsError> {
    check_pair(reference, prediction, 2)?;
    let loa = limits_of_agreement(reference, prediction)?;
    let threshold_metrics = match threshold {
        Some(t) => {
            let labels: Vec<bool> = reference.iter().map(|&r| r > t).collect();
            Some(threshold_metrics(prediction, &labels, t)?)
        }
        None => None,
    };
    let report = EvalReport {
        field_name: field_name.to_string(),
        n: reference.len(),
        unit: unit.to_string(),
        min: reference.iter().copied().fold(f64::INFINITY, f64::min),
        max: reference.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean: mean(reference),
        sd: sample_sd(reference),
        mae: mae(reference, prediction)?,
        loa_lower: loa.0,
        loa_upper: loa.1,
        r_squared: r_squared(reference, prediction)?,
        threshold_metrics,
        baseline_r_squared,
    };
    debug_assert!(report.loa_lower <= report.loa_upper);
    debug_assert!(report.r_squared <= 1.0);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn r_squared_worked_examples() {
        let r = [1.0, 2.0, 3.0];
        assert_eq!(r_squared(&r, &r).unwrap(), 1.0);
        assert_eq!(r_squared(&r, &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert_eq!(r_squared(&r, &[3.0, 2.0, 1.0]).unwrap(), -3.0);
        assert!(matches!(
            r_squared(&[5.0, 5.0], &[1.0, 2.0]),
            Err(StatsError::ConstantInput(_))
        ));
    }

    #[test]
    fn mae_worked_examples() {
        let r = [1.0, 2.0, 3.0];
        assert_eq!(mae(&r, &r).unwrap(), 0.0);
        assert_eq!(mae(&r, &[2.0, 4.0, 6.0]).unwrap(), 2.0);
        assert!(matches!(mae(&[], &[]), Err(StatsError::TooFew { .. })));
    }

    #[test]
    fn loa_worked_examples() {
        let r = [1.0, 2.0];
        assert_eq!(limits_of_agreement(&r, &r).unwrap(), (0.0, 0.0));
        // d = [−1, 1]: mean 0, sample SD √2, interval ±1.96·√2
        let (lo, hi) = limits_of_agreement(&[2.0, 1.0], &[1.0, 2.0]).unwrap();
        let expect = 1.96 * 2.0f64.sqrt();
        assert!((hi - expect).abs() < 1e-12);
        assert!((lo + expect).abs() < 1e-12);
        assert!(matches!(
            limits_of_agreement(&[1.0], &[1.0]),
            Err(StatsError::TooFew { .. })
        ));
    }

    #[test]
    fn pearson_worked_examples() {
        let a = [1.0, 2.0, 3.0];
        let b2: Vec<f64> = a.iter().map(|x| 2.0 * x).collect();
        let bneg: Vec<f64> = a.iter().map(|x| -x).collect();
        assert!((pearson_r(&a, &b2).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson_r(&a, &bneg).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(pearson_r(&a, &[1.0, 3.0, 2.0]).unwrap(), 0.5);
        assert!(matches!(
            pearson_r(&[1.0, 1.0], &[1.0, 2.0]),
            Err(StatsError::ConstantInput(_))
        ));
    }

    #[test]
    fn auc_worked_examples() {
        assert_eq!(roc_auc(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.5; 4], &[true, true, false, false]).unwrap(), 0.5);
        // pos=[0.8,0.4], neg=[0.6,0.2]: 3 of 4 pairs ordered correctly
        let scores = [0.8, 0.4, 0.6, 0.2];
        let labels = [true, true, false, false];
        assert_eq!(roc_auc(&scores, &labels).unwrap(), 0.75);
        assert_eq!(roc_auc_pairwise(&scores, &labels).unwrap(), 0.75);
        assert!(matches!(
            roc_auc(&[0.1, 0.2], &[true, true]),
            Err(StatsError::SingleClass { .. })
        ));
    }

    #[test]
    fn threshold_metrics_confusion_counting() {
        let m = threshold_metrics(&[0.6, 0.4, 0.7], &[true, false, false], 0.5).unwrap();
        assert!((m.accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.sensitivity, 1.0);
        assert_eq!(m.specificity, 0.5);
        assert_eq!(
            (m.true_pos, m.false_pos, m.true_neg, m.false_neg),
            (1, 1, 1, 0)
        );
        // ties at the threshold classify as negative
        let m = threshold_metrics(&[0.5, 0.5], &[true, false], 0.5).unwrap();
        assert_eq!(m.true_pos, 0);
        assert_eq!(m.true_neg, 1);
    }

    #[test]
    fn perfectly_separated_scores_have_accuracy_one() {
        let scores = [0.9, 0.8, 0.2, 0.1];
        let labels = [true, true, false, false];
        let m = threshold_metrics(&scores, &labels, 0.5).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.auc, 1.0);
    }

    proptest! {
        #[test]
        fn auc_routes_agree_with_ties(seed in 0u64..2000) {
            let mut rng = crate::seeds::seeded_rng(seed);
            let n = rng.gen_range(2usize..60);
            // coarse grid forces plenty of exact ties
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..8) as f64 / 7.0).collect();
            let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
            let has_both = labels.iter().any(|&l| l) && labels.iter().any(|&l| !l);
            prop_assume!(has_both);
            let a = roc_auc(&scores, &labels).unwrap();
            let b = roc_auc_pairwise(&scores, &labels).unwrap();
            prop_assert!((a - b).abs() < 1e-12, "rank-sum {a} vs pairwise {b}");
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn mae_nonnegative_and_permutation_invariant(seed in 0u64..500) {
            let mut rng = crate::seeds::seeded_rng(seed);
            let n = rng.gen_range(1usize..40);
            let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let m = mae(&r, &p).unwrap();
            prop_assert!(m >= 0.0);
            // reverse both in lockstep: pairwise permutation invariance
            let rr: Vec<f64> = r.iter().rev().copied().collect();
            let pr: Vec<f64> = p.iter().rev().copied().collect();
            prop_assert!((mae(&rr, &pr).unwrap() - m).abs() < 1e-12);
        }

        #[test]
        fn r_squared_at_most_one(seed in 0u64..500) {
            let mut rng = crate::seeds::seeded_rng(seed);
            let n = rng.gen_range(2usize..40);
            let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            if let Ok(v) = r_squared(&r, &p) {
                prop_assert!(v <= 1.0);
            }
        }

        #[test]
        fn loa_antisymmetric_under_swap(seed in 0u64..500) {
            let mut rng = crate::seeds::seeded_rng(seed);
            let n = rng.gen_range(2usize..40);
            let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let (l, u) = limits_of_agreement(&r, &p).unwrap();
            let (ls, us) = limits_of_agreement(&p, &r).unwrap();
            prop_assert!((ls + u).abs() < 1e-9 && (us + l).abs() < 1e-9);
            prop_assert!(l <= u);
        }
    }
}
