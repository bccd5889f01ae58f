//! CSV and plain-text emission of evaluation reports.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::{AgreementRow, EvalReport, StatsError, SymmetryRow};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StatsError + '_ {
    move |source| StatsError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> StatsError + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(source) => StatsError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => StatsError::InvalidReport(format!("{other:?}")),
    }
}

#[derive(Serialize)]
struct EvalCsvRow<'a> {
    field: &'a str,
    n: usize,
    unit: &'a str,
    min: f64,
    max: f64,
    mean: f64,
    sd: f64,
    mae: f64,
    loa_lower: f64,
    loa_upper: f64,
    r_squared: f64,
    threshold: Option<f64>,
    accuracy: Option<f64>,
    sensitivity: Option<f64>,
    specificity: Option<f64>,
    auc: Option<f64>,
    true_pos: Option<usize>,
    false_pos: Option<usize>,
    true_neg: Option<usize>,
    false_neg: Option<usize>,
    baseline_r_squared: Option<f64>,
}

/// Writes one CSV row per evaluated field; cells for absent optional blocks
/// stay empty.
pub fn write_eval_reports_csv(path: &Path, reports: &[EvalReport]) -> Result<(), StatsError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for r in reports {
        let t = r.threshold_metrics.as_ref();
        w.serialize(EvalCsvRow {
            field: &r.field_name,
            n: r.n,
            unit: &r.unit,
            min: r.min,
            max: r.max,
            mean: r.mean,
            sd: r.sd,
            mae: r.mae,
            loa_lower: r.loa_lower,
            loa_upper: r.loa_upper,
            r_squared: r.r_squared,
            threshold: t.map(|t| t.threshold),
            accuracy: t.map(|t| t.accuracy),
            sensitivity: t.map(|t| t.sensitivity),
            specificity: t.map(|t| t.specificity),
            auc: t.map(|t| t.auc),
            true_pos: t.map(|t| t.true_pos),
            false_pos: t.map(|t| t.false_pos),
            true_neg: t.map(|t| t.true_neg),
            false_neg: t.map(|t| t.false_neg),
            baseline_r_squared: r.baseline_r_squared,
        })
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Serialize)]
struct AgreementCsvRow<'a> {
    comparison: &'a str,
    n: usize,
    term: String,
    slope: f64,
    intercept: f64,
    mae: f64,
    loa_lower: f64,
    loa_upper: f64,
    r_squared: f64,
}

/// Writes labeled cross-method agreement rows.
pub fn write_agreement_csv(
    path: &Path,
    rows: &[(String, AgreementRow)],
) -> Result<(), StatsError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for (label, r) in rows {
        w.serialize(AgreementCsvRow {
            comparison: label,
            n: r.n,
            term: r.term(),
            slope: r.slope,
            intercept: r.intercept,
            mae: r.mae,
            loa_lower: r.loa_lower,
            loa_upper: r.loa_upper,
            r_squared: r.r_squared,
        })
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes bilateral symmetry rows.
pub fn write_symmetry_csv(path: &Path, rows: &[SymmetryRow]) -> Result<(), StatsError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Renders the evaluation as a fixed-width plain-text report.
///
/// `loa_width_ratios` carries labeled ratios of cross-method LoA width to
/// network LoA width; the summary line under them is a simple unweighted
/// mean of the per-row ratios and is labeled as such.
pub fn render_text_report(
    title: &str,
    reports: &[EvalReport],
    agreement: &[(String, AgreementRow)],
    symmetry: &[SymmetryRow],
    loa_width_ratios: &[(String, f64)],
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "{}", "=".repeat(title.len()));
    out.push('\n');

    let _ = writeln!(out, "Per-field cross-validated performance");
    let _ = writeln!(
        out,
        "{:<24} {:>5} {:>6} {:>10} {:>10} {:>10} {:>22} {:>8} {:>8}",
        "field", "n", "unit", "mean", "sd", "MAE", "LoA 95%", "R2", "R2_lr"
    );
    for r in reports {
        let loa = format!("[{:+.3}, {:+.3}]", r.loa_lower, r.loa_upper);
        let r2lr = r
            .baseline_r_squared
            .map(|v| format!("{v:.3}"))
            .unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{:<24} {:>5} {:>6} {:>10.3} {:>10.3} {:>10.3} {:>22} {:>8.3} {:>8}",
            r.field_name, r.n, r.unit, r.mean, r.sd, r.mae, loa, r.r_squared, r2lr
        );
    }

    let classified: Vec<&EvalReport> = reports
        .iter()
        .filter(|r| r.threshold_metrics.is_some())
        .collect();
    if !classified.is_empty() {
        out.push('\n');
        let _ = writeln!(out, "Threshold classification");
        let _ = writeln!(
            out,
            "{:<24} {:>10} {:>9} {:>9} {:>9} {:>9}",
            "field", "threshold", "accuracy", "sens", "spec", "AUC"
        );
        for r in &classified {
            let t = r.threshold_metrics.as_ref().unwrap();
            let _ = writeln!(
                out,
                "{:<24} {:>10.3} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
                r.field_name, t.threshold, t.accuracy, t.sensitivity, t.specificity, t.auc
            );
        }
    }

    if !agreement.is_empty() {
        out.push('\n');
        let _ = writeln!(out, "Cross-method agreement (b calibrated onto a)");
        let _ = writeln!(
            out,
            "{:<32} {:>5} {:>14} {:>10} {:>22} {:>8}",
            "comparison", "n", "term", "MAE", "LoA 95%", "R2"
        );
        for (label, r) in agreement {
            let loa = format!("[{:+.3}, {:+.3}]", r.loa_lower, r.loa_upper);
            let _ = writeln!(
                out,
                "{:<32} {:>5} {:>14} {:>10.3} {:>22} {:>8.3}",
                label,
                r.n,
                r.term(),
                r.mae,
                loa,
                r.r_squared
            );
        }
    }

    if !symmetry.is_empty() {
        out.push('\n');
        let _ = writeln!(out, "Bilateral symmetry");
        let _ = writeln!(
            out,
            "{:<48} {:>5} {:>8} {:>10} {:>10}",
            "fields", "n", "r(a,b)", "r(a,pred)", "r(b,pred)"
        );
        for r in symmetry {
            let _ = writeln!(
                out,
                "{:<48} {:>5} {:>8.3} {:>10.3} {:>10.3}",
                format!("{} / {}", r.field_a, r.field_b),
                r.n,
                r.r_ab,
                r.r_a_pred,
                r.r_b_pred
            );
        }
    }

    if !loa_width_ratios.is_empty() {
        out.push('\n');
        let _ = writeln!(out, "LoA width ratios (cross-method / network)");
        for (label, ratio) in loa_width_ratios {
            let _ = writeln!(out, "{label:<32} {ratio:>8.2}");
        }
        let mean = loa_width_ratios.iter().map(|(_, r)| r).sum::<f64>()
            / loa_width_ratios.len() as f64;
        let _ = writeln!(
            out,
            "simple mean of per-field ratios: {mean:.2}"
        );
    }

    out
}
