//! Tracked tensors and the reverse-mode sweep.
//!
//! Every [`Tensor`] produced by an operation on tracked inputs remembers its
//! parents and the rule that maps an output gradient to input gradients.
//! Nodes receive a monotonically increasing id at creation, so sorting the
//! reachable nodes by descending id is a valid reverse topological order that
//! does not depend on hashing or pointer values.

use std::cell::{Cell, Ref, RefCell};
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::rc::Rc;

use crate::array::Array;
use crate::error::{Result, TensorError};
use crate::real::Real;

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// Vector-Jacobian product of one recorded operation.
pub(crate) trait Backward<T: Real> {
    /// Gradients for each parent, `None` where `needs[i]` is false.
    fn backward(
        &self,
        parents: &[Tensor<T>],
        output: &Array<T>,
        grad: &Array<T>,
        needs: &[bool],
    ) -> Vec<Option<Array<T>>>;
}

struct Origin<T: Real> {
    parents: Vec<Tensor<T>>,
    rule: Box<dyn Backward<T>>,
}

struct Node<T: Real> {
    id: u64,
    value: Array<T>,
    requires_grad: bool,
    leaf: bool,
    grad: RefCell<Option<Array<T>>>,
    origin: RefCell<Option<Origin<T>>>,
    consumed: Cell<bool>,
}

/// Array value with optional gradient tracking.
pub struct Tensor<T: Real>(Rc<Node<T>>);

impl<T: Real> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Self(Rc::clone(&self.0))
    }
}

impl<T: Real> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape())
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

impl<T: Real> Tensor<T> {
    fn leaf(value: Array<T>, requires_grad: bool) -> Self {
        Self(Rc::new(Node {
            id: next_id(),
            value,
            requires_grad,
            leaf: true,
            grad: RefCell::new(None),
            origin: RefCell::new(None),
            consumed: Cell::new(false),
        }))
    }

    /// Untracked leaf; never receives a gradient.
    pub fn constant(value: Array<T>) -> Self {
        Self::leaf(value, false)
    }

    /// Trainable leaf; accumulates gradients on [`Tensor::backward`].
    pub fn parameter(value: Array<T>) -> Self {
        Self::leaf(value, true)
    }

    pub(crate) fn from_op(value: Array<T>, parents: Vec<Tensor<T>>, rule: impl Backward<T> + 'static) -> Self {
        let requires_grad = parents.iter().any(Tensor::requires_grad);
        // Untracked results drop their parents immediately so inference does
        // not keep intermediate activations alive.
        let origin = requires_grad.then(|| Origin {
            parents,
            rule: Box::new(rule),
        });
        Self(Rc::new(Node {
            id: next_id(),
            value,
            requires_grad,
            leaf: false,
            grad: RefCell::new(None),
            origin: RefCell::new(origin),
            consumed: Cell::new(false),
        }))
    }

    pub fn value(&self) -> &Array<T> {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn data(&self) -> &[T] {
        self.0.value.data()
    }

    pub fn numel(&self) -> usize {
        self.0.value.numel()
    }

    pub fn item(&self) -> Option<T> {
        self.0.value.item()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.leaf
    }

    /// Accumulated gradient of a tracked leaf, if any backward pass reached it.
    pub fn grad(&self) -> Option<Ref<'_, Array<T>>> {
        Ref::filter_map(self.0.grad.borrow(), Option::as_ref).ok()
    }

    pub fn take_grad(&self) -> Option<Array<T>> {
        self.0.grad.borrow_mut().take()
    }

    pub fn zero_grad(&self) {
        self.0.grad.borrow_mut().take();
    }

    /// Same values, no history.
    pub fn detach(&self) -> Self {
        Self::constant(self.0.value.clone())
    }

    fn accumulate(&self, g: Array<T>) {
        let mut slot = self.0.grad.borrow_mut();
        match slot.as_mut() {
            Some(acc) => acc.add_assign(&g),
            None => *slot = Some(g),
        }
    }

    /// Propagates d(self)/d(leaf) into every tracked leaf reachable from `self`.
    ///
    /// `self` must be a single-element tensor. The recorded history is released
    /// as it is visited; a second call on the same graph fails with
    /// [`TensorError::GraphConsumed`].
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(TensorError::NotScalar(self.shape().to_vec()));
        }
        if !self.requires_grad() {
            return Err(TensorError::NotRecorded);
        }
        if self.0.consumed.get() {
            return Err(TensorError::GraphConsumed);
        }
        let seed = Array::full(self.shape().to_vec(), T::one());
        if self.is_leaf() {
            self.accumulate(seed);
            return Ok(());
        }

        let mut order = Vec::new();
        let mut seen = HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(t) = stack.pop() {
            if !seen.insert(t.0.id) {
                continue;
            }
            if !t.is_leaf() {
                let origin = t.0.origin.borrow();
                let Some(origin) = origin.as_ref() else {
                    return Err(TensorError::GraphConsumed);
                };
                stack.extend(origin.parents.iter().filter(|p| p.requires_grad()).cloned());
            }
            order.push(t);
        }
        order.sort_by(|a, b| b.0.id.cmp(&a.0.id));

        let mut grads: HashMap<u64, Array<T>> = HashMap::new();
        grads.insert(self.0.id, seed);
        for t in order {
            let Some(g) = grads.remove(&t.0.id) else {
                continue;
            };
            if t.is_leaf() {
                t.accumulate(g);
                continue;
            }
            let origin = t
                .0
                .origin
                .borrow_mut()
                .take()
                .expect("origin checked during traversal");
            t.0.consumed.set(true);
            let needs: Vec<bool> = origin.parents.iter().map(Tensor::requires_grad).collect();
            let parent_grads = origin.rule.backward(&origin.parents, &t.0.value, &g, &needs);
            for ((parent, pg), need) in origin.parents.iter().zip(parent_grads).zip(needs) {
                let Some(pg) = pg else { continue };
                if !need {
                    continue;
                }
                debug_assert_eq!(pg.shape(), parent.shape());
                match grads.get_mut(&parent.0.id) {
                    Some(acc) => acc.add_assign(&pg),
                    None => {
                        grads.insert(parent.0.id, pg);
                    }
                }
            }
        }
        Ok(())
    }
}
