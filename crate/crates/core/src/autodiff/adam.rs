//! Adam optimizer with bias correction.

use ndarray::ArrayD;

use super::{AdError, Scalar};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Per-parameter moment estimates, aligned index-for-index with the
/// parameter list passed to [`adam_step`].
#[derive(Debug, Clone)]
pub struct AdamState<S: Scalar> {
    m: Vec<ArrayD<S>>,
    v: Vec<ArrayD<S>>,
    t: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(params: &[ArrayD<S>]) -> Self {
        Self {
            m: params.iter().map(|p| ArrayD::zeros(p.raw_dim())).collect(),
            v: params.iter().map(|p| ArrayD::zeros(p.raw_dim())).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update:
/// `m ← β₁m + (1−β₁)g`, `v ← β₂v + (1−β₂)g²`,
/// `p ← p − lr·m̂/(√v̂ + ε)` with `m̂ = m/(1−β₁ᵗ)`, `v̂ = v/(1−β₂ᵗ)`.
pub fn adam_step<S: Scalar>(
    params: &mut [ArrayD<S>],
    grads: &[ArrayD<S>],
    state: &mut AdamState<S>,
    lr: f64,
) -> Result<(), AdError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(AdError::Shape {
            op: "adam_step",
            detail: format!(
                "{} params, {} grads, state for {}",
                params.len(),
                grads.len(),
                state.m.len()
            ),
        });
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(AdError::Shape {
                op: "adam_step",
                detail: format!("param {:?} vs grad {:?}", p.shape(), g.shape()),
            });
        }
        super::ensure_finite("adam_step", g)?;
    }
    state.t += 1;
    let t = state.t as i32;
    let b1 = S::of_f64(ADAM_BETA1);
    let b2 = S::of_f64(ADAM_BETA2);
    let one = S::one();
    let c1 = S::of_f64(1.0 / (1.0 - ADAM_BETA1.powi(t)));
    let c2 = S::of_f64(1.0 / (1.0 - ADAM_BETA2.powi(t)));
    let eps = S::of_f64(ADAM_EPSILON);
    let lr = S::of_f64(lr);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        ndarray::Zip::from(p)
            .and(g)
            .and(m)
            .and(v)
            .for_each(|p, &g, m, v| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                debug_assert!(*v >= S::zero());
                let m_hat = *m * c1;
                let v_hat = *v * c2;
                *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
            });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, IxDyn};

    fn single(v: f64) -> Vec<ArrayD<f64>> {
        vec![arr1(&[v]).into_dyn()]
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = single(1.5);
        let grads = single(0.0);
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &grads, &mut state, 1e-2).unwrap();
        assert_eq!(params[0][[0]], 1.5);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_is_a_bias_corrected_sign_step() {
        let mut params = single(0.0);
        let grads = single(0.5);
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &grads, &mut state, 1e-4).unwrap();
        // m̂ = g, v̂ = g² → Δ = −lr·g/(|g|+ε) ≈ −lr
        assert!((params[0][[0]] + 1e-4).abs() < 1e-10, "{}", params[0][[0]]);
    }

    #[test]
    fn identical_calls_produce_identical_results() {
        let grads = single(0.37);
        let mut pa = single(2.0);
        let mut pb = single(2.0);
        let mut sa = AdamState::new(&pa);
        let mut sb = AdamState::new(&pb);
        for _ in 0..5 {
            adam_step(&mut pa, &grads, &mut sa, 3e-3).unwrap();
            adam_step(&mut pb, &grads, &mut sb, 3e-3).unwrap();
        }
        assert_eq!(pa[0], pb[0]);
        assert_eq!(sa.t, sb.t);
    }

    #[test]
    fn non_finite_gradient_aborts_the_step() {
        let mut params = single(1.0);
        let grads = single(f64::NAN);
        let mut state = AdamState::new(&params);
        let err = adam_step(&mut params, &grads, &mut state, 1e-3).unwrap_err();
        assert!(matches!(err, AdError::NonFinite { .. }));
        assert_eq!(state.step_count(), 0); // step not taken
        assert_eq!(params[0][[0]], 1.0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut params = single(1.0);
        let grads = vec![arr1(&[1.0, 2.0]).into_dyn()];
        let mut state = AdamState::new(&params);
        assert!(adam_step(&mut params, &grads, &mut state, 1e-3).is_err());
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut params = single(0.0);
        let mut state = AdamState::new(&params);
        for _ in 0..400 {
            let p = params[0][[0]];
            let grads = single(2.0 * (p - 3.0));
            adam_step(&mut params, &grads, &mut state, 0.05).unwrap();
        }
        assert!((params[0][[0]] - 3.0).abs() < 1e-2, "{}", params[0][[0]]);
    }

    #[test]
    fn state_shapes_follow_params() {
        let params = vec![
            ArrayD::<f64>::zeros(IxDyn(&[2, 3])),
            ArrayD::<f64>::zeros(IxDyn(&[4])),
        ];
        let state = AdamState::new(&params);
        assert_eq!(state.m[0].shape(), &[2, 3]);
        assert_eq!(state.v[1].shape(), &[4]);
    }
}
