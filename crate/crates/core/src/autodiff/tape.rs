use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use super::{Parameter, Real, Tensor};
use crate::{Error, Result};

pub(crate) type BackwardFn<T> = Box<dyn Fn(&Tensor<T>, &mut GradSink<T>)>;

struct Node<T: Real> {
    value: Arc<Tensor<T>>,
    requires_grad: bool,
    backward: Option<BackwardFn<T>>,
}

/// Records operations in execution order so gradients can be propagated in
/// reverse. Node ids are topologically ordered by construction.
///
/// A tape is single-threaded; run independent tapes on separate threads.
pub struct Tape<T: Real> {
    nodes: RefCell<Vec<Node<T>>>,
    bound: RefCell<HashMap<u64, usize>>,
    grad_enabled: bool,
    branch_trace: RefCell<Option<Vec<u8>>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            bound: RefCell::new(HashMap::new()),
            grad_enabled: true,
            branch_trace: RefCell::new(None),
        }
    }

    /// A tape on which parameters never require gradients; used for frozen
    /// networks and inference.
    pub fn no_grad() -> Self {
        Self {
            grad_enabled: false,
            ..Self::new()
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Leaf that never receives gradients.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(Arc::new(value), false)
    }

    /// Leaf that receives gradients (when the tape has gradients enabled).
    pub fn input(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(Arc::new(value), self.grad_enabled)
    }

    /// Binds a parameter; repeated binds of the same parameter share a node.
    pub fn param(&self, p: &Parameter<T>) -> Var<'_, T> {
        if let Some(&id) = self.bound.borrow().get(&p.key()) {
            return Var { tape: self, id };
        }
        let v = self.leaf(p.shared_value(), self.grad_enabled);
        self.bound.borrow_mut().insert(p.key(), v.id);
        v
    }

    pub fn scalar(&self, value: T) -> Var<'_, T> {
        self.constant(Tensor::scalar(value))
    }

    fn leaf(&self, value: Arc<Tensor<T>>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            requires_grad,
            backward: None,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Appends an op result. `backward` is dropped when no parent needs
    /// gradients.
    pub(crate) fn push(
        &self,
        value: Tensor<T>,
        requires_grad: bool,
        backward: impl Fn(&Tensor<T>, &mut GradSink<T>) + 'static,
    ) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Arc::new(value),
            requires_grad,
            backward: requires_grad.then(|| Box::new(backward) as BackwardFn<T>),
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    pub(crate) fn value_of(&self, id: usize) -> Arc<Tensor<T>> {
        self.nodes.borrow()[id].value.clone()
    }

    pub(crate) fn requires_grad_of(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Starts recording which side of each non-smooth point (relu, abs,
    /// clamp) every element falls on.
    pub fn enable_branch_trace(&self) {
        *self.branch_trace.borrow_mut() = Some(Vec::new());
    }

    pub fn take_branch_trace(&self) -> Option<Vec<u8>> {
        self.branch_trace.borrow_mut().take()
    }

    pub(crate) fn trace_branches(&self, f: impl FnOnce(&mut Vec<u8>)) {
        if let Some(buf) = self.branch_trace.borrow_mut().as_mut() {
            f(buf);
        }
    }

    fn backward_from(&self, root: usize) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        let root_val = &nodes[root].value;
        if root_val.numel() != 1 {
            return Err(Error::shape(
                "backward",
                format!("root must be scalar, got {:?}", root_val.shape()),
            ));
        }
        let mut sink = GradSink {
            grads: (0..=root).map(|_| None).collect(),
        };
        let mut leaves: Vec<Option<Tensor<T>>> = (0..=root).map(|_| None).collect();
        if nodes[root].requires_grad {
            sink.grads[root] = Some(Tensor::full(root_val.shape().to_vec(), T::one()));
        }
        for id in (0..=root).rev() {
            let Some(g) = sink.grads[id].take() else {
                continue;
            };
            match &nodes[id].backward {
                Some(f) => f(&g, &mut sink),
                None => leaves[id] = Some(g),
            }
        }
        Ok(Gradients {
            leaves,
            params: self.bound.borrow().clone(),
        })
    }
}

/// Accumulates gradients for nodes during the reverse sweep.
pub struct GradSink<T: Real> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> GradSink<T> {
    /// Adds into the gradient buffer of `id`, allocating zeros first if
    /// needed.
    pub(crate) fn with(&mut self, id: usize, shape: &[usize], f: impl FnOnce(&mut [T])) {
        let slot = &mut self.grads[id];
        let g = slot.get_or_insert_with(|| Tensor::zeros(shape.to_vec()));
        f(g.data_mut());
    }

    pub(crate) fn add(&mut self, id: usize, grad: Tensor<T>) {
        match &mut self.grads[id] {
            Some(g) => {
                for (a, b) in g.data_mut().iter_mut().zip(grad.data()) {
                    *a += *b;
                }
            }
            slot @ None => *slot = Some(grad),
        }
    }
}

/// Leaf gradients produced by [`Var::backward`].
pub struct Gradients<T: Real> {
    leaves: Vec<Option<Tensor<T>>>,
    params: HashMap<u64, usize>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: &Var<'_, T>) -> Option<&Tensor<T>> {
        self.leaves.get(v.id).and_then(|g| g.as_ref())
    }

    pub fn of_param(&self, p: &Parameter<T>) -> Option<&Tensor<T>> {
        self.params
            .get(&p.key())
            .and_then(|&id| self.leaves.get(id))
            .and_then(|g| g.as_ref())
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T: Real> {
    pub(crate) tape: &'t Tape<T>,
    pub(crate) id: usize,
}

impl<'t, T: Real> Var<'t, T> {
    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Arc<Tensor<T>> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires_grad_of(self.id)
    }

    /// Value of a one-element tensor as `f64`.
    pub fn item(&self) -> f64 {
        self.value().item().f64()
    }

    /// Same value, cut off from the gradient graph.
    pub fn detach(&self) -> Var<'t, T> {
        self.tape.leaf(self.value(), false)
    }

    /// Reverse sweep from this scalar.
    pub fn backward(&self) -> Result<Gradients<T>> {
        self.tape.backward_from(self.id)
    }
}

impl<T: Real> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}
