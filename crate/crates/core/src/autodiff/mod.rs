//! Minimal reverse-mode automatic differentiation on dense n-D arrays.
//!
//! Graphs are built eagerly: every operation computes its output immediately
//! and records a backward closure plus its parent tensors. [`Tensor::backward`]
//! topologically sorts the graph and accumulates gradients in a fixed order,
//! so repeated runs are bitwise identical. All operations verify their
//! results are finite and fail loudly otherwise — silent divergence is
//! untestable.
//!
//! A [`Tensor`] is a cheap `Rc` handle; cloning shares the node. Graphs are
//! single-owner during forward/backward, but independent graphs may run on
//! separate threads.

mod adam;
mod batchnorm;
mod conv;
mod gradcheck;
mod ops;

pub use adam::{adam_step, AdamState};
pub use batchnorm::{batchnorm2d, BnMode, RunningStats};
pub use conv::conv2d;
pub use gradcheck::{grad_check, GradCheckReport};
pub use ops::{add, global_avg_pool, guided_relu, linear, mse_loss, relu};

use std::cell::RefCell;
use std::collections::HashSet;
use std::rc::Rc;

use ndarray::{ArrayD, ScalarOperand};
use num_traits::Float;

#[derive(Debug, thiserror::Error)]
pub enum AdError {
    #[error("{op}: non-finite value produced")]
    NonFinite { op: &'static str },
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("backward requires a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("{0}")]
    Invalid(String),
}

/// Element type of a tensor: 32- or 64-bit IEEE float.
pub trait Scalar:
    Float
    + ndarray::LinalgScalar
    + ScalarOperand
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    /// Dtype tag used in checkpoint indexes.
    const DTYPE: &'static str;
    /// Conversion from f64 (rounding for the 32-bit type). Named to avoid
    /// clashing with the fallible `num_traits` conversions in scope.
    fn of_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";
    fn of_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";
    fn of_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

pub(crate) fn ensure_finite<S: Scalar>(op: &'static str, a: &ArrayD<S>) -> Result<(), AdError> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(AdError::NonFinite { op })
    }
}

/// Backward rule: receives the output gradient and a per-parent "is gradient
/// needed" mask, returns one optional gradient per parent (None where masked
/// off or structurally absent).
type BackwardFn<S> = Box<dyn Fn(&ArrayD<S>, &[bool]) -> Result<Vec<Option<ArrayD<S>>>, AdError>>;

struct Node<S: Scalar> {
    data: ArrayD<S>,
    requires_grad: bool,
    grad: RefCell<Option<ArrayD<S>>>,
    parents: Vec<Tensor<S>>,
    backward: Option<BackwardFn<S>>,
}

/// Shared handle to one value in the computation graph.
pub struct Tensor<S: Scalar>(Rc<Node<S>>);

impl<S: Scalar> std::fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape())
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

impl<S: Scalar> Clone for Tensor<S> {
    fn clone(&self) -> Self {
        Tensor(Rc::clone(&self.0))
    }
}

impl<S: Scalar> Tensor<S> {
    /// Graph leaf. Leaves with `requires_grad` accumulate gradients during
    /// [`Tensor::backward`]; branches feeding only grad-free leaves are
    /// pruned from the backward pass entirely.
    pub fn leaf(data: ArrayD<S>, requires_grad: bool) -> Result<Self, AdError> {
        ensure_finite("leaf", &data)?;
        Ok(Tensor(Rc::new(Node {
            data,
            requires_grad,
            grad: RefCell::new(None),
            parents: Vec::new(),
            backward: None,
        })))
    }

    /// Interior node produced by an operation.
    pub(crate) fn from_op(
        op: &'static str,
        data: ArrayD<S>,
        parents: Vec<Tensor<S>>,
        backward: BackwardFn<S>,
    ) -> Result<Self, AdError> {
        ensure_finite(op, &data)?;
        let requires_grad = parents.iter().any(|p| p.0.requires_grad);
        Ok(Tensor(Rc::new(Node {
            data,
            requires_grad,
            grad: RefCell::new(None),
            parents,
            backward: if requires_grad { Some(backward) } else { None },
        })))
    }

    pub fn data(&self) -> &ArrayD<S> {
        &self.0.data
    }

    pub fn shape(&self) -> &[usize] {
        self.0.data.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// Accumulated gradient, if backward has reached this node.
    pub fn grad(&self) -> Option<ArrayD<S>> {
        self.0.grad.borrow().clone()
    }

    /// Scalar value of a 0-d or single-element tensor.
    pub fn scalar(&self) -> Result<S, AdError> {
        if self.0.data.len() != 1 {
            return Err(AdError::NonScalarRoot(self.shape().to_vec()));
        }
        Ok(*self.0.data.iter().next().unwrap())
    }

    fn ptr(&self) -> *const Node<S> {
        Rc::as_ptr(&self.0)
    }

    /// Reverse-mode sweep from a scalar root. Gradients accumulate into every
    /// reachable node with `requires_grad`; prior gradients on those nodes
    /// are cleared first.
    pub fn backward(&self) -> Result<(), AdError> {
        if self.0.data.len() != 1 {
            return Err(AdError::NonScalarRoot(self.shape().to_vec()));
        }

        // Iterative post-order DFS: children (parents in graph terms) before
        // the node itself, so reversing gives root-first topological order.
        let mut order: Vec<Tensor<S>> = Vec::new();
        let mut seen: HashSet<*const Node<S>> = HashSet::new();
        let mut stack: Vec<(Tensor<S>, usize)> = vec![(self.clone(), 0)];
        seen.insert(self.ptr());
        while let Some((node, child)) = stack.pop() {
            if child < node.0.parents.len() {
                stack.push((node.clone(), child + 1));
                let parent = node.0.parents[child].clone();
                if parent.0.requires_grad && seen.insert(parent.ptr()) {
                    stack.push((parent, 0));
                }
            } else {
                order.push(node);
            }
        }

        for node in &order {
            *node.0.grad.borrow_mut() = None;
        }
        *self.0.grad.borrow_mut() = Some(ArrayD::ones(self.0.data.raw_dim()));

        for node in order.iter().rev() {
            let Some(backward) = &node.0.backward else {
                continue;
            };
            let out_grad = node.0.grad.borrow().clone();
            let Some(out_grad) = out_grad else {
                continue; // unreachable from the root
            };
            let needs: Vec<bool> = node.0.parents.iter().map(|p| p.0.requires_grad).collect();
            let contribs = backward(&out_grad, &needs)?;
            debug_assert_eq!(contribs.len(), node.0.parents.len());
            for (parent, contrib) in node.0.parents.iter().zip(contribs) {
                let Some(contrib) = contrib else { continue };
                if !parent.0.requires_grad {
                    continue;
                }
                if contrib.shape() != parent.shape() {
                    return Err(AdError::Shape {
                        op: "backward",
                        detail: format!(
                            "gradient shape {:?} vs parent {:?}",
                            contrib.shape(),
                            parent.shape()
                        ),
                    });
                }
                ensure_finite("backward", &contrib)?;
                let mut slot = parent.0.grad.borrow_mut();
                match slot.as_mut() {
                    Some(g) => *g += &contrib,
                    None => *slot = Some(contrib),
                }
            }
        }
        Ok(())
    }
}

/// Thread-local ReLU activation-pattern trace, used by the gradient checker
/// to detect finite-difference evaluations that stepped across a kink.
pub(crate) mod trace {
    use std::cell::RefCell;

    thread_local! {
        static ACTIVE: RefCell<Option<Vec<u64>>> = const { RefCell::new(None) };
    }

    /// Begins recording; any previous recording is discarded.
    pub(crate) fn start() {
        ACTIVE.with(|a| *a.borrow_mut() = Some(Vec::new()));
    }

    /// Stops recording and returns the packed sign pattern.
    pub(crate) fn take() -> Vec<u64> {
        ACTIVE.with(|a| a.borrow_mut().take().unwrap_or_default())
    }

    /// Appends one ReLU call's positive-mask to the active recording, if any.
    pub(crate) fn record(mask: impl Iterator<Item = bool>) {
        ACTIVE.with(|a| {
            let mut borrow = a.borrow_mut();
            let Some(words) = borrow.as_mut() else {
                return;
            };
            let mut word = 0u64;
            let mut bits = 0u32;
            for positive in mask {
                word = (word << 1) | positive as u64;
                bits += 1;
                if bits == 64 {
                    words.push(word);
                    word = 0;
                    bits = 0;
                }
            }
            if bits > 0 {
                words.push(word);
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr1;

    fn leaf(vals: &[f64]) -> Tensor<f64> {
        Tensor::leaf(arr1(vals).into_dyn(), true).unwrap()
    }

    #[test]
    fn leaf_rejects_non_finite_values() {
        let err = Tensor::leaf(arr1(&[1.0, f64::NAN]).into_dyn(), false).unwrap_err();
        assert!(matches!(err, AdError::NonFinite { .. }));
    }

    #[test]
    fn backward_requires_scalar_root() {
        let x = leaf(&[1.0, 2.0]);
        assert!(matches!(x.backward(), Err(AdError::NonScalarRoot(_))));
    }

    #[test]
    fn diamond_graph_accumulates_both_paths() {
        // y = sum(x + x): dy/dx = 2 through two uses of the same node
        let x = leaf(&[1.0, 2.0]);
        let s = add(&x, &x).unwrap();
        let loss = mse_loss(
            &s,
            &Tensor::leaf(arr1(&[0.0, 0.0]).into_dyn(), false).unwrap(),
        )
        .unwrap();
        loss.backward().unwrap();
        // d/dx mean((2x)²) = 4x·2/n = [4, 8]
        let g = x.grad().unwrap();
        assert_eq!(g, arr1(&[4.0, 8.0]).into_dyn());
    }

    #[test]
    fn grad_free_leaves_stay_grad_free() {
        let x = leaf(&[1.0]);
        let t = Tensor::leaf(arr1(&[3.0]).into_dyn(), false).unwrap();
        let loss = mse_loss(&x, &t).unwrap();
        loss.backward().unwrap();
        assert!(x.grad().is_some());
        assert!(t.grad().is_none());
    }

    #[test]
    fn repeated_backward_runs_are_identical() {
        let x = leaf(&[0.5, -1.5, 2.0]);
        let r = relu(&x).unwrap();
        let loss = mse_loss(
            &r,
            &Tensor::leaf(arr1(&[1.0, 1.0, 1.0]).into_dyn(), false).unwrap(),
        )
        .unwrap();
        loss.backward().unwrap();
        let g1 = x.grad().unwrap();
        loss.backward().unwrap();
        let g2 = x.grad().unwrap();
        assert_eq!(g1, g2);
    }
}
