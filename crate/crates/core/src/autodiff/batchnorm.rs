//! Batch normalization over the channel axis of `[N,C,H,W]` tensors.
//!
//! Training mode normalizes by batch statistics (biased variance, ε inside
//! the square root) and folds them into running estimates; eval mode
//! normalizes by the running estimates. Running variance stores the
//! *unbiased* batch variance, the convention most published checkpoints use.
//! Statistics accumulate in f64 in a fixed order regardless of element type,
//! so 32-bit forward passes are reproducible and well-conditioned.

use ndarray::{Array1, ArrayD, Axis, Ix4};

use super::{AdError, Scalar, Tensor};

pub const BN_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

/// Exponentially averaged channel statistics, updated by train-mode calls.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<S: Scalar> {
    pub mean: Array1<S>,
    pub var: Array1<S>,
}

impl<S: Scalar> RunningStats<S> {
    /// Identity-normalization start: mean 0, variance 1.
    pub fn new(channels: usize) -> Self {
        Self {
            mean: Array1::zeros(channels),
            var: Array1::ones(channels),
        }
    }
}

/// Normalizes each channel, scales by `gamma`, shifts by `beta`.
///
/// Train mode requires N ≥ 2, normalizes by batch mean/variance over
/// (N,H,W), and updates `running` in place with `momentum` (0.1 by
/// convention elsewhere in this crate). Eval mode reads `running` and leaves
/// it untouched. Backward implements the full batch-statistics gradient in
/// train mode and the frozen-statistics gradient in eval mode.
pub fn batchnorm2d<S: Scalar>(
    x: &Tensor<S>,
    gamma: &Tensor<S>,
    beta: &Tensor<S>,
    running: &mut RunningStats<S>,
    mode: BnMode,
    momentum: f64,
) -> Result<Tensor<S>, AdError> {
    let x4 = x
        .data()
        .view()
        .into_dimensionality::<Ix4>()
        .map_err(|_| AdError::Shape {
            op: "batchnorm2d",
            detail: format!("expected 4-d input, got {:?}", x.shape()),
        })?;
    let (n, c, h, w) = x4.dim();
    if gamma.shape() != [c] || beta.shape() != [c] || running.mean.len() != c {
        return Err(AdError::Shape {
            op: "batchnorm2d",
            detail: format!(
                "channels {c}, gamma {:?}, beta {:?}, running {}",
                gamma.shape(),
                beta.shape(),
                running.mean.len()
            ),
        });
    }
    if mode == BnMode::Train && n < 2 {
        return Err(AdError::Invalid(
            "batchnorm2d: train mode needs a batch of at least 2".into(),
        ));
    }
    let m = (n * h * w) as f64;

    // per-channel (mean, inv_std) used for this pass
    let mut ch_mean = Array1::<S>::zeros(c);
    let mut ch_inv_std = Array1::<S>::zeros(c);
    for ci in 0..c {
        let (mean, var) = match mode {
            BnMode::Train => {
                let slab = x4.index_axis(Axis(1), ci);
                let mut sum = 0.0f64;
                for &v in slab.iter() {
                    sum += v.as_f64();
                }
                let mean = sum / m;
                let mut ss = 0.0f64;
                for &v in slab.iter() {
                    let d = v.as_f64() - mean;
                    ss += d * d;
                }
                let var = ss / m;
                let unbiased = ss / (m - 1.0);
                running.mean[ci] = S::of_f64(
                    (1.0 - momentum) * running.mean[ci].as_f64() + momentum * mean,
                );
                running.var[ci] = S::of_f64(
                    (1.0 - momentum) * running.var[ci].as_f64() + momentum * unbiased,
                );
                (mean, var)
            }
            BnMode::Eval => (running.mean[ci].as_f64(), running.var[ci].as_f64()),
        };
        ch_mean[ci] = S::of_f64(mean);
        ch_inv_std[ci] = S::of_f64(1.0 / (var + BN_EPSILON).sqrt());
    }

    let mut x_hat = x.data().clone();
    {
        let mut x_hat4 = x_hat.view_mut().into_dimensionality::<Ix4>().unwrap();
        for ci in 0..c {
            let mu = ch_mean[ci];
            let is = ch_inv_std[ci];
            x_hat4
                .index_axis_mut(Axis(1), ci)
                .mapv_inplace(|v| (v - mu) * is);
        }
    }
    let mut out = x_hat.clone();
    {
        let mut out4 = out.view_mut().into_dimensionality::<Ix4>().unwrap();
        let g = gamma.data();
        let b = beta.data();
        for ci in 0..c {
            let (gc, bc) = (g[[ci]], b[[ci]]);
            out4.index_axis_mut(Axis(1), ci)
                .mapv_inplace(|v| v * gc + bc);
        }
    }

    let gamma_d = gamma
        .data()
        .view()
        .into_dimensionality::<ndarray::Ix1>()
        .unwrap()
        .to_owned();
    Tensor::from_op(
        "batchnorm2d",
        out,
        vec![x.clone(), gamma.clone(), beta.clone()],
        Box::new(move |g, needs| {
            let g4 = g.view().into_dimensionality::<Ix4>().unwrap();
            let xh4 = x_hat.view().into_dimensionality::<Ix4>().unwrap();
            let mut dgamma = needs[1].then(|| Array1::<S>::zeros(c));
            let mut dbeta = needs[2].then(|| Array1::<S>::zeros(c));
            let mut dx = needs[0].then(|| ArrayD::<S>::zeros(g.raw_dim()));
            for ci in 0..c {
                let g_ch = g4.index_axis(Axis(1), ci);
                let xh_ch = xh4.index_axis(Axis(1), ci);
                let mut sum_g = 0.0f64;
                let mut sum_gx = 0.0f64;
                for (&gv, &xv) in g_ch.iter().zip(xh_ch.iter()) {
                    sum_g += gv.as_f64();
                    sum_gx += gv.as_f64() * xv.as_f64();
                }
                if let Some(dg) = dgamma.as_mut() {
                    dg[ci] = S::of_f64(sum_gx);
                }
                if let Some(db) = dbeta.as_mut() {
                    db[ci] = S::of_f64(sum_g);
                }
                if let Some(dx) = dx.as_mut() {
                    let scale = gamma_d[ci] * ch_inv_std[ci];
                    let mut dx4 = dx.view_mut().into_dimensionality::<Ix4>().unwrap();
                    let mut dx_ch = dx4.index_axis_mut(Axis(1), ci);
                    match mode {
                        BnMode::Train => {
                            let mean_g = S::of_f64(sum_g / m);
                            let mean_gx = S::of_f64(sum_gx / m);
                            for ((dv, &gv), &xv) in
                                dx_ch.iter_mut().zip(g_ch.iter()).zip(xh_ch.iter())
                            {
                                *dv = scale * (gv - mean_g - xv * mean_gx);
                            }
                        }
                        BnMode::Eval => {
                            for (dv, &gv) in dx_ch.iter_mut().zip(g_ch.iter()) {
                                *dv = scale * gv;
                            }
                        }
                    }
                }
            }
            Ok(vec![
                dx,
                dgamma.map(|a| a.into_dyn()),
                dbeta.map(|a| a.into_dyn()),
            ])
        }),
    )
}
