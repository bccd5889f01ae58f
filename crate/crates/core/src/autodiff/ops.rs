//! Pointwise and dense operations: ReLU (standard and guided), residual add,
//! global average pooling, the linear head, and mean-squared-error loss.

use ndarray::{ArrayD, Axis, Ix2, Ix4};

use super::{trace, AdError, Scalar, Tensor};

/// Elementwise `max(x, 0)`.
///
/// Standard backward: passes the gradient where the forward input was
/// strictly positive (the subgradient at exactly zero is taken as zero).
pub fn relu<S: Scalar>(x: &Tensor<S>) -> Result<Tensor<S>, AdError> {
    relu_impl(x, false)
}

/// ReLU whose backward additionally zeroes entries where the *incoming
/// gradient* is non-positive. Forward is identical to [`relu`]; swapping this
/// rule in is what turns plain input-gradients into guided backpropagation.
pub fn guided_relu<S: Scalar>(x: &Tensor<S>) -> Result<Tensor<S>, AdError> {
    relu_impl(x, true)
}

fn relu_impl<S: Scalar>(x: &Tensor<S>, guided: bool) -> Result<Tensor<S>, AdError> {
    let zero = S::zero();
    trace::record(x.data().iter().map(|&v| v > zero));
    let out = x.data().mapv(|v| if v > zero { v } else { zero });
    let mask = x.data().mapv(|v| if v > zero { S::one() } else { zero });
    Tensor::from_op(
        "relu",
        out,
        vec![x.clone()],
        Box::new(move |g, needs| {
            if !needs[0] {
                return Ok(vec![None]);
            }
            let mut dx = g * &mask;
            if guided {
                dx.mapv_inplace(|v| if v > zero { v } else { zero });
            }
            Ok(vec![Some(dx)])
        }),
    )
}

/// Elementwise sum of two same-shape tensors (the residual join).
pub fn add<S: Scalar>(x: &Tensor<S>, y: &Tensor<S>) -> Result<Tensor<S>, AdError> {
    if x.shape() != y.shape() {
        return Err(AdError::Shape {
            op: "add",
            detail: format!("{:?} vs {:?}", x.shape(), y.shape()),
        });
    }
    let out = x.data() + y.data();
    Tensor::from_op(
        "add",
        out,
        vec![x.clone(), y.clone()],
        Box::new(move |g, needs| {
            let gx = needs[0].then(|| g.clone());
            let gy = needs[1].then(|| g.clone());
            Ok(vec![gx, gy])
        }),
    )
}

/// Mean over the two spatial axes: `[N,C,H,W] → [N,C]`.
pub fn global_avg_pool<S: Scalar>(x: &Tensor<S>) -> Result<Tensor<S>, AdError> {
    let x4 = x
        .data()
        .view()
        .into_dimensionality::<Ix4>()
        .map_err(|_| AdError::Shape {
            op: "global_avg_pool",
            detail: format!("expected 4-d input, got {:?}", x.shape()),
        })?;
    let (n, c, h, w) = x4.dim();
    let scale = S::of_f64(1.0 / (h * w) as f64);
    let mut out = ndarray::Array2::<S>::zeros((n, c));
    for i in 0..n {
        for j in 0..c {
            out[(i, j)] = x4.index_axis(Axis(0), i).index_axis(Axis(0), j).sum() * scale;
        }
    }
    Tensor::from_op(
        "global_avg_pool",
        out.into_dyn(),
        vec![x.clone()],
        Box::new(move |g, needs| {
            if !needs[0] {
                return Ok(vec![None]);
            }
            let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
            let mut dx = ArrayD::<S>::zeros(ndarray::IxDyn(&[n, c, h, w]));
            {
                let mut dx4 = dx.view_mut().into_dimensionality::<Ix4>().unwrap();
                for i in 0..n {
                    for j in 0..c {
                        dx4.index_axis_mut(Axis(0), i)
                            .index_axis_mut(Axis(0), j)
                            .fill(g2[(i, j)] * scale);
                    }
                }
            }
            Ok(vec![Some(dx)])
        }),
    )
}

/// Affine map `x·w + b` with `x: [N,C]`, `w: [C,M]`, `b: [M]`.
pub fn linear<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    b: &Tensor<S>,
) -> Result<Tensor<S>, AdError> {
    let x2 = x
        .data()
        .view()
        .into_dimensionality::<Ix2>()
        .map_err(|_| AdError::Shape {
            op: "linear",
            detail: format!("expected 2-d input, got {:?}", x.shape()),
        })?;
    let w2 = w
        .data()
        .view()
        .into_dimensionality::<Ix2>()
        .map_err(|_| AdError::Shape {
            op: "linear",
            detail: format!("expected 2-d weight, got {:?}", w.shape()),
        })?;
    if x2.ncols() != w2.nrows() || b.shape() != [w2.ncols()] {
        return Err(AdError::Shape {
            op: "linear",
            detail: format!(
                "x {:?} · w {:?} + b {:?}",
                x.shape(),
                w.shape(),
                b.shape()
            ),
        });
    }
    let mut out = x2.dot(&w2);
    let b1 = b.data().view().into_dimensionality::<ndarray::Ix1>().unwrap();
    for mut row in out.rows_mut() {
        row += &b1;
    }
    let (xc, wc) = (x.clone(), w.clone());
    Tensor::from_op(
        "linear",
        out.into_dyn(),
        vec![x.clone(), w.clone(), b.clone()],
        Box::new(move |g, needs| {
            let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
            let x2 = xc.data().view().into_dimensionality::<Ix2>().unwrap();
            let w2 = wc.data().view().into_dimensionality::<Ix2>().unwrap();
            let gx = needs[0].then(|| g2.dot(&w2.t()).into_dyn());
            let gw = needs[1].then(|| x2.t().dot(&g2).into_dyn());
            let gb = needs[2].then(|| g2.sum_axis(Axis(0)).into_dyn());
            Ok(vec![gx, gw, gb])
        }),
    )
}

/// Mean over all elements of `(pred − target)²`, as a 0-d tensor.
/// Backward into `pred` is exactly `2(pred − target)/N`.
pub fn mse_loss<S: Scalar>(pred: &Tensor<S>, target: &Tensor<S>) -> Result<Tensor<S>, AdError> {
    if pred.shape() != target.shape() {
        return Err(AdError::Shape {
            op: "mse_loss",
            detail: format!("{:?} vs {:?}", pred.shape(), target.shape()),
        });
    }
    let n = pred.data().len();
    if n == 0 {
        return Err(AdError::Invalid("mse_loss on empty batch".into()));
    }
    let diff = pred.data() - target.data();
    let inv_n = S::of_f64(1.0 / n as f64);
    let loss = diff.iter().map(|&d| d * d).fold(S::zero(), |a, b| a + b) * inv_n;
    let two = S::of_f64(2.0);
    Tensor::from_op(
        "mse_loss",
        ndarray::arr0(loss).into_dyn(),
        vec![pred.clone(), target.clone()],
        Box::new(move |g, needs| {
            let g0 = *g.iter().next().unwrap();
            let gp = needs[0].then(|| diff.mapv(|d| two * d * inv_n * g0));
            let gt = needs[1].then(|| diff.mapv(|d| -two * d * inv_n * g0));
            Ok(vec![gp, gt])
        }),
    )
}
