//! Central finite-difference validation of backward passes.
//!
//! Two situations make a finite-difference probe lie about a correct
//! gradient, and the checker abstains on both rather than raising false
//! alarms. First, ReLU: its derivative is discontinuous at zero, and a probe
//! that crosses the kink measures a slope no analytic gradient can match.
//! Each ReLU records its activation sign pattern into a thread-local trace
//! during checked evaluations; when a probe's pattern differs from the base
//! point's, the step is shrunk, and if the pattern still changes the element
//! is skipped and counted. Second, resolution: the probe extracts the
//! derivative from differences of O(|loss|) values, so its absolute accuracy
//! is bounded by evaluation roundoff over the step width; an element whose
//! true derivative sits near zero by cancellation can be far smaller than
//! that bound, and no step width certifies a *relative* tolerance on it.
//! Both abstention counts are reported so callers can assert they stay rare.

use ndarray::ArrayD;

use super::{trace, AdError, Tensor};

/// Outcome of a [`grad_check`] sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// max over checked elements of `|analytic − numeric| /
    /// max(|analytic|, |numeric|, 1e-12)`.
    pub max_rel_err: f64,
    /// Elements compared.
    pub checked: usize,
    /// Elements abandoned because every probe width crossed a ReLU kink.
    pub skipped: usize,
    /// Elements whose measured derivative is so small that evaluation
    /// roundoff alone exceeds `tolerance` relative to it, making the probe
    /// uninformative at any width. Decided purely from the probe values —
    /// the analytic gradient is never consulted.
    pub below_resolution: usize,
}

/// Probe-width shrink schedule: retry across a kink with an 8× smaller step,
/// twice, before giving up on that element.
const SHRINKS: [f64; 3] = [1.0, 0.125, 0.015625];

/// Fourth-order central-difference stencil offsets, in units of the probe
/// width, for `(8·(f₊₁−f₋₁) − (f₊₂−f₋₂)) / (12h)`. The two-point stencil
/// leaves O(h²) truncation error, which normalization layers with few
/// samples per channel can push past 1e-6; this one leaves O(h⁴). It must
/// be evaluated as grouped differences: inputs with no influence on the
/// loss then cancel bitwise to a numeric derivative of exactly zero.
const STENCIL_STEPS: [f64; 4] = [-2.0, -1.0, 1.0, 2.0];

/// Margin multiplier for the oracle's roundoff resolution. One loss
/// evaluation carries an absolute error of a few ulps of its magnitude;
/// the stencil divides that by `12h/18`. The measured derivative is only
/// trusted when `tolerance` times its magnitude clears this bound with
/// the safety factor applied, so the bound may overestimate the true
/// evaluation error by up to that factor without producing false alarms.
const RESOLUTION_SAFETY: f64 = 64.0;

/// Compares the analytic gradient of `f` against central finite differences
/// at every element of `inputs`.
///
/// `f` must be pure — same inputs, same loss — and return a scalar. It runs
/// in 64-bit precision; probe width `h` applies to unit-scale inputs.
/// `tolerance` is the relative accuracy the caller intends to assert on
/// the report: elements whose derivative magnitude falls below what the
/// probe can resolve to that accuracy are tallied in `below_resolution`
/// rather than compared (a derivative extracted from O(1) loss values
/// cannot be certified to a *relative* bound once the derivative itself
/// shrinks toward the probe's roundoff). Mutable state such as
/// normalization running statistics must be created fresh inside `f`.
pub fn grad_check<F>(
    inputs: &[ArrayD<f64>],
    h: f64,
    tolerance: f64,
    f: F,
) -> Result<GradCheckReport, AdError>
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>, AdError>,
{
    let leaves: Vec<Tensor<f64>> = inputs
        .iter()
        .map(|a| Tensor::leaf(a.clone(), true))
        .collect::<Result<_, _>>()?;
    trace::start();
    let loss = f(&leaves)?;
    let base_sig = trace::take();
    loss.backward()?;
    let analytic: Vec<ArrayD<f64>> = leaves
        .iter()
        .map(|l| l.grad().unwrap_or_else(|| ArrayD::zeros(l.data().raw_dim())))
        .collect();

    let eval = |probe: &[ArrayD<f64>]| -> Result<(f64, Vec<u64>), AdError> {
        let leaves: Vec<Tensor<f64>> = probe
            .iter()
            .map(|a| Tensor::leaf(a.clone(), false))
            .collect::<Result<_, _>>()?;
        trace::start();
        let out = f(&leaves)?;
        let sig = trace::take();
        Ok((out.scalar()?, sig))
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        checked: 0,
        skipped: 0,
        below_resolution: 0,
    };
    let mut probe: Vec<ArrayD<f64>> = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        for j in 0..input.len() {
            let orig = input.as_slice().unwrap()[j];
            let mut measured = None;
            for shrink in SHRINKS {
                let hj = h * shrink;
                let mut values = [0.0; 4];
                let mut same_kinks = true;
                for (slot, step) in STENCIL_STEPS.iter().enumerate() {
                    probe[i].as_slice_mut().unwrap()[j] = orig + step * hj;
                    let (value, sig) = eval(&probe)?;
                    if sig != base_sig {
                        same_kinks = false;
                        break;
                    }
                    values[slot] = value;
                }
                if same_kinks {
                    let inner = values[2] - values[1];
                    let outer = values[3] - values[0];
                    let numeric = (8.0 * inner - outer) / (12.0 * hj);
                    let f_scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    // |stencil weights|₁/12 = 1.5 converts per-evaluation
                    // roundoff into derivative error
                    let resolution =
                        1.5 * RESOLUTION_SAFETY * f64::EPSILON * f_scale / hj;
                    measured = Some((numeric, resolution));
                    break;
                }
            }
            probe[i].as_slice_mut().unwrap()[j] = orig;
            match measured {
                Some((numeric, resolution)) => {
                    // an exact zero means every probe returned identical
                    // bits: the loss is flat there and the comparison is
                    // exact, so it stays checked
                    if numeric != 0.0 && resolution > tolerance * numeric.abs() {
                        report.below_resolution += 1;
                        continue;
                    }
                    let a = analytic[i].as_slice().unwrap()[j];
                    let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
                    report.max_rel_err = report.max_rel_err.max(rel);
                    report.checked += 1;
                }
                None => report.skipped += 1,
            }
        }
    }
    Ok(report)
}
