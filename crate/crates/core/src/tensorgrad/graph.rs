use std::cell::{Cell, Ref, RefCell};
use std::collections::HashMap;
use std::rc::Rc;

use super::ops::Op;
use super::tensor::check_shape;
use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a value participating in a [`Graph`].
///
/// Cloning is cheap (reference counted). A `Var` owns its forward value and,
/// when it is a leaf with `requires_grad`, the gradient accumulated by
/// [`Graph::backward`].
#[derive(Clone)]
pub struct Var<R: Real>(pub(crate) Rc<Node<R>>);

pub(crate) struct Node<R: Real> {
    pub(crate) id: usize,
    pub(crate) shape: Vec<usize>,
    pub(crate) value: Vec<R>,
    pub(crate) requires_grad: bool,
    pub(crate) grad: RefCell<Option<Vec<R>>>,
    pub(crate) op: Op<R>,
}

impl<R: Real> Var<R> {
    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn value(&self) -> &[R] {
        &self.0.value
    }

    pub fn numel(&self) -> usize {
        self.0.value.len()
    }

    pub fn channels(&self) -> usize {
        *self.0.shape.last().expect("rank >= 1")
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// Accumulated gradient; `None` until a backward pass reached this leaf.
    pub fn grad(&self) -> Option<Ref<'_, Vec<R>>> {
        let g = self.0.grad.borrow();
        if g.is_some() {
            Some(Ref::map(g, |g| g.as_ref().expect("checked")))
        } else {
            None
        }
    }

    pub fn grad_tensor(&self) -> Option<Tensor<R>> {
        self.grad()
            .map(|g| Tensor::new(&self.0.shape, g.clone()).expect("grad matches shape"))
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    pub fn to_tensor(&self) -> Tensor<R> {
        Tensor::new(&self.0.shape, self.0.value.clone()).expect("node shape is valid")
    }

    /// The single value of a one-element variable.
    pub fn item(&self) -> R {
        self.0.value[0]
    }

    pub(crate) fn is_leaf(&self) -> bool {
        matches!(self.0.op, Op::Leaf)
    }
}

impl<R: Real> std::fmt::Debug for Var<R> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.0.id)
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

/// Records executed operations so gradients can be replayed in reverse.
///
/// An inference graph records nothing: intermediates are freed as soon as
/// their last `Var` handle drops.
pub struct Graph<R: Real> {
    recording: bool,
    next_id: Cell<usize>,
    tape: RefCell<Vec<Var<R>>>,
}

impl<R: Real> Default for Graph<R> {
    fn default() -> Self {
        Self::new()
    }
}

impl<R: Real> Graph<R> {
    pub fn new() -> Self {
        Graph { recording: true, next_id: Cell::new(0), tape: RefCell::new(Vec::new()) }
    }

    /// A graph that never records operations (forward evaluation only).
    pub fn inference() -> Self {
        Graph { recording: false, next_id: Cell::new(0), tape: RefCell::new(Vec::new()) }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    /// Number of operations recorded so far.
    pub fn len(&self) -> usize {
        self.tape.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn fresh_id(&self) -> usize {
        let id = self.next_id.get();
        self.next_id.set(id + 1);
        id
    }

    pub fn leaf(&self, t: Tensor<R>, requires_grad: bool) -> Var<R> {
        let shape = t.shape().to_vec();
        Var(Rc::new(Node {
            id: self.fresh_id(),
            shape,
            value: t.into_data(),
            requires_grad: requires_grad && self.recording,
            grad: RefCell::new(None),
            op: Op::Leaf,
        }))
    }

    /// Trainable leaf.
    pub fn param(&self, t: Tensor<R>) -> Var<R> {
        self.leaf(t, true)
    }

    pub fn constant(&self, t: Tensor<R>) -> Var<R> {
        self.leaf(t, false)
    }

    /// Creates the output node of an operation. `op` is only built (and its
    /// inputs only retained) when the result participates in differentiation.
    pub(crate) fn push(
        &self,
        shape: Vec<usize>,
        value: Vec<R>,
        inputs: &[&Var<R>],
        op: impl FnOnce() -> Op<R>,
    ) -> Var<R> {
        debug_assert_eq!(check_shape(&shape).ok(), Some(value.len()));
        let tracked = self.recording && inputs.iter().any(|v| v.requires_grad());
        let var = Var(Rc::new(Node {
            id: self.fresh_id(),
            shape,
            value,
            requires_grad: tracked,
            grad: RefCell::new(None),
            op: if tracked { op() } else { Op::Leaf },
        }));
        if tracked {
            self.tape.borrow_mut().push(var.clone());
        }
        var
    }

    /// Reverse pass from a scalar `loss`. Gradients are summed into every
    /// reachable leaf with `requires_grad`; repeated calls accumulate.
    pub fn backward(&self, loss: &Var<R>) -> Result<()> {
        if loss.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss.shape()
            )));
        }
        if !loss.requires_grad() {
            return Ok(());
        }
        if loss.is_leaf() {
            accumulate_leaf(loss, vec![R::one()]);
            return Ok(());
        }
        let mut pending: HashMap<usize, Vec<R>> = HashMap::new();
        pending.insert(loss.0.id, vec![R::one()]);
        let tape = self.tape.borrow();
        for node in tape.iter().rev() {
            let Some(gy) = pending.remove(&node.0.id) else { continue };
            let mut sink = GradSink { pending: &mut pending };
            node.0.op.backward(&node.0, &gy, &mut sink);
        }
        Ok(())
    }
}

fn accumulate_leaf<R: Real>(v: &Var<R>, g: Vec<R>) {
    let mut slot = v.0.grad.borrow_mut();
    match slot.as_mut() {
        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += *b),
        None => *slot = Some(g),
    }
}

/// Receives input gradients produced by one backward step.
pub(crate) struct GradSink<'a, R: Real> {
    pending: &'a mut HashMap<usize, Vec<R>>,
}

impl<R: Real> GradSink<'_, R> {
    pub(crate) fn wants(&self, v: &Var<R>) -> bool {
        v.requires_grad()
    }

    pub(crate) fn add(&mut self, v: &Var<R>, g: Vec<R>) {
        if !v.requires_grad() {
            return;
        }
        debug_assert_eq!(g.len(), v.numel());
        if v.is_leaf() {
            accumulate_leaf(v, g);
            return;
        }
        match self.pending.get_mut(&v.0.id) {
            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += *b),
            None => {
                self.pending.insert(v.0.id, g);
            }
        }
    }
}
