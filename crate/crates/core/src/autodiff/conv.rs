//! 2-D cross-correlation via im2col and one matrix multiply per call.
//!
//! The whole batch is lowered into a single `(C·kh·kw) × (N·OH·OW)` column
//! matrix so the GEMM runs at full blocking efficiency; per-sample multiplies
//! are several times slower at the sizes the backbone uses. The backward pass
//! recomputes the column matrix from the saved input instead of caching it,
//! trading ~10% extra lowering work for hundreds of MB of activation memory
//! on large inputs.

use ndarray::{Array2, ArrayD, Ix4};
use rayon::prelude::*;

use super::{AdError, Scalar, Tensor};

struct ConvGeom {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    f: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    padding: usize,
}

fn geometry<S: Scalar>(
    x: &ArrayD<S>,
    k: &ArrayD<S>,
    stride: usize,
    padding: usize,
) -> Result<ConvGeom, AdError> {
    let shape_err = |detail: String| AdError::Shape {
        op: "conv2d",
        detail,
    };
    let [n, c, h, w] = *x.shape() else {
        return Err(shape_err(format!("expected 4-d input, got {:?}", x.shape())));
    };
    let [f, kc, kh, kw] = *k.shape() else {
        return Err(shape_err(format!(
            "expected 4-d kernel, got {:?}",
            k.shape()
        )));
    };
    if kc != c {
        return Err(shape_err(format!(
            "kernel expects {kc} input channels, input has {c}"
        )));
    }
    if stride == 0 {
        return Err(shape_err("stride must be ≥ 1".into()));
    }
    if kh > h + 2 * padding || kw > w + 2 * padding {
        return Err(shape_err(format!(
            "kernel {kh}×{kw} larger than padded input {}×{}",
            h + 2 * padding,
            w + 2 * padding
        )));
    }
    Ok(ConvGeom {
        n,
        c,
        h,
        w,
        f,
        kh,
        kw,
        oh: (h + 2 * padding - kh) / stride + 1,
        ow: (w + 2 * padding - kw) / stride + 1,
        stride,
        padding,
    })
}

/// Lowers `x` to a `(C·kh·kw) × (N·OH·OW)` matrix; out-of-bounds taps are
/// zero. Rows are independent, so the parallel fill is bitwise deterministic.
fn im2col<S: Scalar>(x: &ArrayD<S>, g: &ConvGeom) -> Array2<S> {
    let xs = x.as_slice().expect("input is standard layout");
    let cols_w = g.n * g.oh * g.ow;
    let mut cols = Array2::<S>::zeros((g.c * g.kh * g.kw, cols_w));
    cols.outer_iter_mut()
        .into_par_iter()
        .enumerate()
        .for_each(|(r, mut row)| {
            let kj = r % g.kw;
            let ki = (r / g.kw) % g.kh;
            let c = r / (g.kw * g.kh);
            let row = row.as_slice_mut().expect("row is contiguous");
            for n in 0..g.n {
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.padding as isize;
                    let out_base = (n * g.oh + oy) * g.ow;
                    if iy < 0 || iy >= g.h as isize {
                        continue; // rows stay zero
                    }
                    let in_base = ((n * g.c + c) * g.h + iy as usize) * g.w;
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kj) as isize - g.padding as isize;
                        if ix >= 0 && ix < g.w as isize {
                            row[out_base + ox] = xs[in_base + ix as usize];
                        }
                    }
                }
            }
        });
    cols
}

/// Scatter-adds a column-matrix gradient back to input shape. The
/// accumulator is laid out channel-major so each channel's slab is
/// contiguous: channels scatter in parallel without overlap, and within a
/// channel the loop order is fixed, keeping the reduction bitwise
/// deterministic.
fn col2im<S: Scalar>(dcols: &Array2<S>, g: &ConvGeom) -> ArrayD<S> {
    let dc = dcols.as_slice().expect("dcols is standard layout");
    let cols_w = g.n * g.oh * g.ow;
    let mut dx_cm = Array2::<S>::zeros((g.c, g.n * g.h * g.w));
    dx_cm
        .outer_iter_mut()
        .into_par_iter()
        .enumerate()
        .for_each(|(c, mut slab)| {
            let slab = slab.as_slice_mut().expect("slab is contiguous");
            for ki in 0..g.kh {
                for kj in 0..g.kw {
                    let r = (c * g.kh + ki) * g.kw + kj;
                    let row = &dc[r * cols_w..(r + 1) * cols_w];
                    for n in 0..g.n {
                        for oy in 0..g.oh {
                            let iy = (oy * g.stride + ki) as isize - g.padding as isize;
                            if iy < 0 || iy >= g.h as isize {
                                continue;
                            }
                            let in_base = (n * g.h + iy as usize) * g.w;
                            let out_base = (n * g.oh + oy) * g.ow;
                            for ox in 0..g.ow {
                                let ix = (ox * g.stride + kj) as isize - g.padding as isize;
                                if ix >= 0 && ix < g.w as isize {
                                    let cell = &mut slab[in_base + ix as usize];
                                    *cell = *cell + row[out_base + ox];
                                }
                            }
                        }
                    }
                }
            }
        });
    dx_cm
        .into_shape_with_order((g.c, g.n, g.h, g.w))
        .unwrap()
        .permuted_axes([1, 0, 2, 3])
        .as_standard_layout()
        .to_owned()
        .into_dyn()
}

/// Batched 2-D cross-correlation with zero padding:
/// `x: [N,C,H,W] ⋆ k: [F,C,kh,kw] → [N,F,OH,OW]` where
/// `OH = ⌊(H + 2·padding − kh)/stride⌋ + 1`. No bias — a normalization layer
/// follows every convolution in the backbone.
pub fn conv2d<S: Scalar>(
    x: &Tensor<S>,
    k: &Tensor<S>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<S>, AdError> {
    let geom = geometry(x.data(), k.data(), stride, padding)?;
    let cols = im2col(x.data(), &geom);
    let k_mat = k
        .data()
        .view()
        .into_shape_with_order((geom.f, geom.c * geom.kh * geom.kw))
        .expect("kernel is standard layout");
    let out_mat = k_mat.dot(&cols); // (F, N·OH·OW)
    let out = out_mat
        .into_shape_with_order((geom.f, geom.n, geom.oh, geom.ow))
        .unwrap()
        .permuted_axes([1, 0, 2, 3])
        .as_standard_layout()
        .to_owned()
        .into_dyn();

    let (xc, kc) = (x.clone(), k.clone());
    Tensor::from_op(
        "conv2d",
        out,
        vec![x.clone(), k.clone()],
        Box::new(move |g, needs| {
            let geom = geometry(xc.data(), kc.data(), stride, padding)?;
            let g_mat = g
                .view()
                .into_dimensionality::<Ix4>()
                .unwrap()
                .permuted_axes([1, 0, 2, 3])
                .as_standard_layout()
                .to_owned()
                .into_shape_with_order((geom.f, geom.n * geom.oh * geom.ow))
                .unwrap();
            let needs_cols = needs[1];
            let cols = needs_cols.then(|| im2col(xc.data(), &geom));
            let gk = cols.as_ref().map(|cols| {
                g_mat
                    .dot(&cols.t())
                    .into_shape_with_order((geom.f, geom.c, geom.kh, geom.kw))
                    .unwrap()
                    .into_dyn()
            });
            let gx = needs[0].then(|| {
                let k_mat = kc
                    .data()
                    .view()
                    .into_shape_with_order((geom.f, geom.c * geom.kh * geom.kw))
                    .unwrap();
                let dcols = k_mat.t().dot(&g_mat).as_standard_layout().to_owned();
                col2im(&dcols, &geom)
            });
            Ok(vec![gx, gk])
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, mse_loss};
    use ndarray::{ArrayD, IxDyn};
    use rand::Rng;

    fn tensor4(shape: [usize; 4], vals: &[f64]) -> Tensor<f64> {
        Tensor::leaf(
            ArrayD::from_shape_vec(IxDyn(&shape), vals.to_vec()).unwrap(),
            true,
        )
        .unwrap()
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let x = tensor4([1, 1, 2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let k = tensor4([1, 1, 1, 1], &[1.0]);
        let y = conv2d(&x, &k, 1, 0).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn two_by_two_diagonal_kernel() {
        let x = tensor4([1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let k = tensor4([1, 1, 2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let y = conv2d(&x, &k, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data()[[0, 0, 0, 0]], 5.0);
    }

    #[test]
    fn zero_padding_windows_clip_at_borders() {
        let x = tensor4([1, 1, 2, 2], &[1.0; 4]);
        let k = tensor4([1, 1, 3, 3], &[1.0; 9]);
        let y = conv2d(&x, &k, 1, 1).unwrap();
        // every 3×3 window sees exactly the four ones
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert!(y.data().iter().all(|&v| v == 4.0));
    }

    #[test]
    fn strided_output_shape() {
        let x = Tensor::leaf(ArrayD::<f64>::zeros(IxDyn(&[2, 3, 5, 7])), false).unwrap();
        let k = Tensor::leaf(ArrayD::<f64>::zeros(IxDyn(&[4, 3, 3, 3])), false).unwrap();
        let y = conv2d(&x, &k, 2, 1).unwrap();
        assert_eq!(y.shape(), &[2, 4, 3, 4]);
    }

    #[test]
    fn channel_mismatch_rejected() {
        let x = Tensor::leaf(ArrayD::<f64>::zeros(IxDyn(&[1, 2, 4, 4])), false).unwrap();
        let k = Tensor::leaf(ArrayD::<f64>::zeros(IxDyn(&[1, 3, 3, 3])), false).unwrap();
        assert!(matches!(conv2d(&x, &k, 1, 1), Err(AdError::Shape { .. })));
    }

    #[test]
    fn oversized_kernel_rejected() {
        let x = Tensor::leaf(ArrayD::<f64>::zeros(IxDyn(&[1, 1, 2, 2])), false).unwrap();
        let k = Tensor::leaf(ArrayD::<f64>::zeros(IxDyn(&[1, 1, 5, 5])), false).unwrap();
        assert!(matches!(conv2d(&x, &k, 1, 1), Err(AdError::Shape { .. })));
    }

    #[test]
    fn gradients_match_finite_differences_on_random_input() {
        let mut rng = crate::seeds::seeded_rng(17);
        let x: ArrayD<f64> =
            ArrayD::from_shape_fn(IxDyn(&[2, 3, 5, 5]), |_| rng.gen_range(-1.0..1.0));
        let k: ArrayD<f64> =
            ArrayD::from_shape_fn(IxDyn(&[4, 3, 3, 3]), |_| rng.gen_range(-0.5..0.5));
        let t: ArrayD<f64> =
            ArrayD::from_shape_fn(IxDyn(&[2, 4, 3, 3]), |_| rng.gen_range(-1.0..1.0));
        let report = grad_check(
            &[x, k],
            1e-3,
            1e-6,
            |inputs| {
                let y = conv2d(&inputs[0], &inputs[1], 2, 1)?;
                mse_loss(&y, &Tensor::leaf(t.clone(), false)?)
            },
        )
        .unwrap();
        assert!(
            report.max_rel_err < 1e-6,
            "max relative error {}",
            report.max_rel_err
        );
        assert_eq!(report.skipped, 0); // no kinks in a pure conv graph
    }

    #[test]
    fn strides_and_padding_agree_with_finite_differences(){
        let mut rng = crate::seeds::seeded_rng(23);
        for (stride, padding, seed) in [(1usize, 0usize, 1u64), (1, 2, 2), (3, 1, 3)] {
            let mut r = crate::seeds::seeded_rng(seed * 91 + rng.gen_range(0..7));
            let x: ArrayD<f64> =
                ArrayD::from_shape_fn(IxDyn(&[1, 2, 6, 4]), |_| r.gen_range(-1.0..1.0));
            let k: ArrayD<f64> =
                ArrayD::from_shape_fn(IxDyn(&[2, 2, 3, 3]), |_| r.gen_range(-0.5..0.5));
            let report = grad_check(
                &[x, k],
                1e-3,
                1e-6,
                |inputs| {
                    let y = conv2d(&inputs[0], &inputs[1], stride, padding)?;
                    let zeros = Tensor::leaf(ArrayD::zeros(y.data().raw_dim()), false)?;
                    mse_loss(&y, &zeros)
                },
            )
            .unwrap();
            assert!(
                report.max_rel_err < 1e-6,
                "stride {stride} pad {padding}: {}",
                report.max_rel_err
            );
        }
    }
}
