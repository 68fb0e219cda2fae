//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! Every operation on [`Var`]s records a node holding its inputs and a
//! backward rule. Backward rules are themselves written with `Var`
//! operations, so running [`grad`] with `create_graph = true` records the
//! backward pass as new nodes and the resulting gradients can be
//! differentiated again (R1 and gradient-penalty terms need this).
//!
//! Node ids grow monotonically per thread, so a node's inputs always have
//! smaller ids than the node itself and descending id order is a valid
//! reverse topological order.

use std::cell::Cell;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::rc::Rc;

use crate::error::{GradError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

pub fn is_grad_enabled() -> bool {
    GRAD_ENABLED.with(|c| c.get())
}

/// Disables graph recording until dropped.
#[must_use = "recording resumes as soon as the guard is dropped"]
pub struct NoGradGuard {
    prev: bool,
}

pub fn no_grad() -> NoGradGuard {
    let prev = GRAD_ENABLED.with(|c| c.replace(false));
    NoGradGuard { prev }
}

impl Drop for NoGradGuard {
    fn drop(&mut self) {
        GRAD_ENABLED.with(|c| c.set(self.prev));
    }
}

/// Backward rule of a recorded operation.
pub trait BackwardOp<T: Scalar> {
    fn name(&self) -> &'static str;

    /// Returns one gradient slot per input. Slots whose `needs` entry is
    /// false may be left `None`.
    fn backward(
        &self,
        inputs: &[Var<T>],
        output: &Var<T>,
        grad: &Var<T>,
        needs: &[bool],
    ) -> Result<Vec<Option<Var<T>>>>;
}

struct GradFn<T: Scalar> {
    op: Box<dyn BackwardOp<T>>,
    inputs: Vec<Var<T>>,
}

struct Node<T: Scalar> {
    id: u64,
    value: Tensor<T>,
    requires_grad: bool,
    grad_fn: Option<GradFn<T>>,
}

/// A tensor participating in the computation tape.
pub struct Var<T: Scalar>(Rc<Node<T>>);

impl<T: Scalar> Clone for Var<T> {
    fn clone(&self) -> Self {
        Var(Rc::clone(&self.0))
    }
}

impl<T: Scalar> fmt::Debug for Var<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.0.id)
            .field("shape", &self.shape())
            .field("requires_grad", &self.0.requires_grad)
            .field("op", &self.op_name())
            .finish()
    }
}

impl<T: Scalar> Var<T> {
    /// A value that never receives gradients.
    pub fn constant(value: Tensor<T>) -> Self {
        Var(Rc::new(Node { id: next_id(), value, requires_grad: false, grad_fn: None }))
    }

    /// A leaf that gradients flow into.
    pub fn leaf(value: Tensor<T>) -> Self {
        Var(Rc::new(Node { id: next_id(), value, requires_grad: true, grad_fn: None }))
    }

    pub(crate) fn from_op(value: Tensor<T>, op: impl BackwardOp<T> + 'static, inputs: Vec<Var<T>>) -> Self {
        let requires_grad = is_grad_enabled() && inputs.iter().any(|v| v.requires_grad());
        let grad_fn = requires_grad.then(|| GradFn { op: Box::new(op), inputs });
        Var(Rc::new(Node { id: next_id(), value, requires_grad, grad_fn }))
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn is_leaf(&self) -> bool {
        self.0.grad_fn.is_none()
    }

    pub fn op_name(&self) -> Option<&'static str> {
        self.0.grad_fn.as_ref().map(|g| g.op.name())
    }

    /// Same value, cut from the graph.
    pub fn detach(&self) -> Self {
        Var::constant(self.0.value.clone())
    }

    pub fn item(&self) -> T {
        self.0.value.item()
    }
}

/// Gradients of a scalar `root` with respect to `wrt`.
///
/// Unreachable targets yield `None`. With `create_graph`, the returned
/// gradients are themselves differentiable.
pub fn grad<T: Scalar>(root: &Var<T>, wrt: &[&Var<T>], create_graph: bool) -> Result<Vec<Option<Var<T>>>> {
    if root.value().len() != 1 {
        return Err(GradError::Contract(format!(
            "backward needs a scalar loss, got shape {:?}",
            root.shape()
        )));
    }
    let seed = Var::constant(Tensor::ones(root.shape().to_vec()));
    grad_with_seed(root, seed, wrt, create_graph)
}

/// Vector-Jacobian product: propagates `seed` (shaped like `root`) backward.
pub fn grad_with_seed<T: Scalar>(
    root: &Var<T>,
    seed: Var<T>,
    wrt: &[&Var<T>],
    create_graph: bool,
) -> Result<Vec<Option<Var<T>>>> {
    if seed.shape() != root.shape() {
        return Err(GradError::Contract(format!(
            "seed shape {:?} differs from root shape {:?}",
            seed.shape(),
            root.shape()
        )));
    }
    let _guard = (!create_graph).then(no_grad);
    if !root.requires_grad() {
        return Ok(vec![None; wrt.len()]);
    }

    let targets: HashSet<u64> = wrt.iter().map(|v| v.id()).collect();

    // Collect every recorded node reachable from the root.
    let mut nodes: Vec<Var<T>> = Vec::new();
    let mut seen: HashSet<u64> = HashSet::new();
    let mut stack = vec![root.clone()];
    seen.insert(root.id());
    while let Some(v) = stack.pop() {
        if let Some(gf) = &v.0.grad_fn {
            for inp in &gf.inputs {
                if inp.requires_grad() && seen.insert(inp.id()) {
                    stack.push(inp.clone());
                }
            }
        }
        nodes.push(v);
    }
    nodes.sort_by_key(|v| v.id());

    // A node needs a gradient when a target lies at or below it.
    let mut needs: HashMap<u64, bool> = HashMap::with_capacity(nodes.len());
    for v in &nodes {
        let below = v
            .0
            .grad_fn
            .as_ref()
            .is_some_and(|gf| gf.inputs.iter().any(|i| needs.get(&i.id()).copied().unwrap_or(false)));
        needs.insert(v.id(), below || targets.contains(&v.id()));
    }

    let mut grads: HashMap<u64, Var<T>> = HashMap::new();
    grads.insert(root.id(), seed);
    for v in nodes.iter().rev() {
        if !needs[&v.id()] {
            continue;
        }
        let Some(gf) = &v.0.grad_fn else { continue };
        let g = if targets.contains(&v.id()) { grads.get(&v.id()).cloned() } else { grads.remove(&v.id()) };
        let Some(g) = g else { continue };
        let input_needs: Vec<bool> = gf
            .inputs
            .iter()
            .map(|i| i.requires_grad() && needs.get(&i.id()).copied().unwrap_or(false))
            .collect();
        let input_grads = gf.op.backward(&gf.inputs, v, &g, &input_needs)?;
        for ((inp, need), ig) in gf.inputs.iter().zip(&input_needs).zip(input_grads) {
            if !need {
                continue;
            }
            let Some(ig) = ig else { continue };
            if ig.shape() != inp.shape() {
                return Err(GradError::Contract(format!(
                    "{} produced gradient {:?} for input {:?}",
                    gf.op.name(),
                    ig.shape(),
                    inp.shape()
                )));
            }
            let acc = match grads.remove(&inp.id()) {
                Some(prev) => crate::ops::add(&prev, &ig)?,
                None => ig,
            };
            grads.insert(inp.id(), acc);
        }
    }
    Ok(wrt.iter().map(|v| grads.get(&v.id()).cloned()).collect())
}
