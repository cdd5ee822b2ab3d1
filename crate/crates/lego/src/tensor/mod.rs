//! Dense tensors with reverse-mode automatic differentiation.
//!
//! The graph is a dynamic tape: ops record their parents at forward time and
//! `backward` walks the recorded graph in reverse topological order. Tensors
//! are `Send + Sync`; anything without a graph node (constants, cached
//! embeddings) is safe to share across threads for concurrent reads.

mod backward;
mod gradcheck;
mod kernels;
mod op;

pub use gradcheck::{grad_check, grad_check_params, GradCheckReport};
pub(crate) use op::Op;

use std::cell::Cell;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, RwLock, RwLockReadGuard};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

thread_local! {
    static NO_GRAD: Cell<bool> = const { Cell::new(false) };
}

/// Run `f` without recording any graph nodes. Ops executed inside produce
/// plain constants regardless of their inputs. The flag is per-thread: wrap
/// the body of each parallel task, not the dispatch site.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    let prev = NO_GRAD.with(|c| c.replace(true));
    let out = f();
    NO_GRAD.with(|c| c.set(prev));
    out
}

pub(crate) fn grad_suppressed() -> bool {
    NO_GRAD.with(|c| c.get())
}

struct Inner<F: Scalar> {
    id: u64,
    shape: Vec<usize>,
    data: RwLock<Vec<F>>,
    requires_grad: bool,
    frozen: AtomicBool,
    grad: RwLock<Option<Vec<F>>>,
    op: Option<Op<F>>,
}

/// Dense row-major tensor, cheaply cloneable (shared storage).
pub struct Tensor<F: Scalar>(Arc<Inner<F>>);

impl<F: Scalar> Clone for Tensor<F> {
    fn clone(&self) -> Self {
        Tensor(Arc::clone(&self.0))
    }
}

impl<F: Scalar> std::fmt::Debug for Tensor<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.0.id)
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

impl<F: Scalar> Tensor<F> {
    pub(crate) fn new_node(shape: Vec<usize>, data: Vec<F>, op: Option<Op<F>>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let requires_grad = op.is_some();
        Tensor(Arc::new(Inner {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data: RwLock::new(data),
            requires_grad,
            frozen: AtomicBool::new(false),
            grad: RwLock::new(None),
            op,
        }))
    }

    /// Constant tensor (no gradient, no graph node).
    pub fn from_vec(shape: &[usize], data: Vec<F>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::dim(
                "from_vec",
                format!(
                    "shape {:?} wants {} elements, got {}",
                    shape,
                    numel,
                    data.len()
                ),
            ));
        }
        Ok(Self::new_node(shape.to_vec(), data, None))
    }

    /// Trainable leaf: participates in autodiff and accumulates `grad`.
    pub fn leaf(shape: &[usize], data: Vec<F>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::dim(
                "leaf",
                format!(
                    "shape {:?} wants {} elements, got {}",
                    shape,
                    numel,
                    data.len()
                ),
            ));
        }
        Ok(Self::new_leaf_unchecked(shape.to_vec(), data))
    }

    /// Leaf constructor for internal callers that already know the shape fits.
    pub(crate) fn new_leaf_unchecked(shape: Vec<usize>, data: Vec<F>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor(Arc::new(Inner {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data: RwLock::new(data),
            requires_grad: true,
            frozen: AtomicBool::new(false),
            grad: RwLock::new(None),
            op: None,
        }))
    }

    /// Shared read access to the raw buffer.
    pub fn read_data(&self) -> RwLockReadGuard<'_, Vec<F>> {
        self.read()
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self::new_node(shape.to_vec(), vec![F::ZERO; numel], None)
    }

    pub fn full(shape: &[usize], v: F) -> Self {
        let numel = shape.iter().product();
        Self::new_node(shape.to_vec(), vec![v; numel], None)
    }

    pub fn scalar(v: F) -> Self {
        Self::new_node(vec![], vec![v], None)
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.0.shape.iter().product()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.op.is_none()
    }

    pub fn frozen(&self) -> bool {
        self.0.frozen.load(Ordering::Relaxed)
    }

    /// Freeze or unfreeze a leaf. Frozen leaves receive no gradient and are
    /// pruned from the backward walk entirely. Toggle before building graphs.
    pub fn set_frozen(&self, frozen: bool) {
        self.0.frozen.store(frozen, Ordering::Relaxed);
    }

    /// True when backward should reach (or pass through) this tensor.
    pub(crate) fn tracks_grad(&self) -> bool {
        self.0.requires_grad && !(self.is_leaf() && self.frozen())
    }

    pub(crate) fn op(&self) -> Option<&Op<F>> {
        self.0.op.as_ref()
    }

    pub(crate) fn read(&self) -> RwLockReadGuard<'_, Vec<F>> {
        self.0.data.read().unwrap()
    }

    pub fn to_vec(&self) -> Vec<F> {
        self.read().clone()
    }

    /// Extract the single element of a scalar tensor.
    pub fn item(&self) -> Result<F> {
        if self.numel() != 1 {
            return Err(Error::Contract(format!(
                "item() on tensor of shape {:?}",
                self.shape()
            )));
        }
        Ok(self.read()[0])
    }

    /// Overwrite the buffer of a leaf (optimizer steps, grad checks).
    pub fn set_data(&self, data: Vec<F>) -> Result<()> {
        if data.len() != self.numel() {
            return Err(Error::dim(
                "set_data",
                format!("expected {} elements, got {}", self.numel(), data.len()),
            ));
        }
        *self.0.data.write().unwrap() = data;
        Ok(())
    }

    /// Constant copy detached from the graph.
    pub fn detach(&self) -> Tensor<F> {
        Self::new_node(self.0.shape.clone(), self.to_vec(), None)
    }

    pub fn grad(&self) -> Option<Vec<F>> {
        self.0.grad.read().unwrap().clone()
    }

    pub fn zero_grad(&self) {
        let mut g = self.0.grad.write().unwrap();
        if let Some(buf) = g.as_mut() {
            buf.iter_mut().for_each(|v| *v = F::ZERO);
        } else {
            *g = None;
        }
    }

    pub(crate) fn accumulate_grad(&self, contribution: &[F]) {
        let mut g = self.0.grad.write().unwrap();
        match g.as_mut() {
            Some(buf) => {
                for (b, &c) in buf.iter_mut().zip(contribution.iter()) {
                    *b += c;
                }
            }
            None => *g = Some(contribution.to_vec()),
        }
    }
}

/// Named trainable tensor. `frozen` parameters receive zero gradient and are
/// skipped by optimizer steps.
#[derive(Clone, Debug)]
pub struct Parameter<F: Scalar> {
    tensor: Tensor<F>,
    name: String,
}

impl<F: Scalar> Parameter<F> {
    pub fn new(name: impl Into<String>, tensor: Tensor<F>) -> Self {
        assert!(tensor.is_leaf() && tensor.requires_grad());
        Parameter {
            tensor,
            name: name.into(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn tensor(&self) -> &Tensor<F> {
        &self.tensor
    }

    pub fn frozen(&self) -> bool {
        self.tensor.frozen()
    }

    pub fn set_frozen(&self, frozen: bool) {
        self.tensor.set_frozen(frozen);
    }

    pub fn grad(&self) -> Option<Vec<F>> {
        self.tensor.grad()
    }

    pub fn zero_grad(&self) {
        self.tensor.zero_grad();
    }
}
