use std::cell::Cell;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::rc::Rc;

use super::ops::Op;
use crate::error::{Error, Result};

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

pub fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

struct GradModeGuard(bool);

impl Drop for GradModeGuard {
    fn drop(&mut self) {
        GRAD_ENABLED.with(|g| g.set(self.0));
    }
}

fn set_grad_mode(on: bool) -> GradModeGuard {
    GradModeGuard(GRAD_ENABLED.with(|g| g.replace(on)))
}

/// Runs `f` without recording operations.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    let _guard = set_grad_mode(false);
    f()
}

pub(crate) struct Node {
    pub(crate) id: u64,
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Vec<f64>,
    pub(crate) op: Option<Op>,
    pub(crate) requires_grad: bool,
}

/// Reference-counted n-dimensional `f64` array that records the operation
/// which produced it.
///
/// Node ids grow monotonically, so every parent has a smaller id than its
/// children and descending id order is a valid reverse topological order.
#[derive(Clone)]
pub struct Tensor(pub(crate) Rc<Node>);

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.0.id)
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

impl Tensor {
    fn leaf(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {shape:?} does not match {} values",
            data.len()
        );
        Tensor(Rc::new(Node {
            id: next_id(),
            shape,
            data,
            op: None,
            requires_grad,
        }))
    }

    /// A tensor that never receives gradients.
    pub fn constant(shape: &[usize], data: Vec<f64>) -> Self {
        Self::leaf(shape.to_vec(), data, false)
    }

    /// A differentiable leaf (a trainable parameter or an input we
    /// differentiate with respect to).
    pub fn variable(shape: &[usize], data: Vec<f64>) -> Self {
        Self::leaf(shape.to_vec(), data, true)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::constant(shape, vec![0.0; shape.iter().product()])
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self::constant(shape, vec![value; shape.iter().product()])
    }

    pub fn scalar(value: f64) -> Self {
        Self::constant(&[1], vec![value])
    }

    pub(crate) fn from_op(shape: Vec<usize>, data: Vec<f64>, op: Op) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let requires_grad = grad_enabled() && op.parents().iter().any(|p| p.requires_grad());
        Tensor(Rc::new(Node {
            id: next_id(),
            shape,
            data,
            op: requires_grad.then_some(op),
            requires_grad,
        }))
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.data.clone()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.numel(), 1, "item() on a tensor of shape {:?}", self.shape());
        self.0.data[0]
    }

    /// Same values, cut from the graph.
    pub fn detach(&self) -> Tensor {
        Tensor::constant(self.shape(), self.to_vec())
    }

    pub(crate) fn op(&self) -> Option<&Op> {
        self.0.op.as_ref()
    }
}

/// Gradients of the scalar `output` with respect to each tensor in `wrt`.
///
/// With `create_graph` the returned gradients are themselves recorded, so they
/// can be differentiated again; otherwise they are constants. Tensors that do
/// not influence `output` receive zeros.
pub fn grad(output: &Tensor, wrt: &[&Tensor], create_graph: bool) -> Result<Vec<Tensor>> {
    if output.numel() != 1 {
        return Err(Error::Shape(format!(
            "grad needs a scalar output, got shape {:?}",
            output.shape()
        )));
    }
    let seed = Tensor::full(output.shape(), 1.0);
    grad_with_seed(output, seed, wrt, create_graph)
}

/// Vector-Jacobian product: backpropagates `seed` (shaped like `output`).
pub fn grad_with_seed(output: &Tensor, seed: Tensor, wrt: &[&Tensor], create_graph: bool) -> Result<Vec<Tensor>> {
    if seed.shape() != output.shape() {
        return Err(Error::Shape(format!(
            "seed shape {:?} does not match output {:?}",
            seed.shape(),
            output.shape()
        )));
    }
    let targets: HashSet<u64> = wrt.iter().map(|t| t.id()).collect();

    // collect the recorded subgraph below `output`
    let mut nodes: BTreeMap<u64, Tensor> = BTreeMap::new();
    let mut stack = vec![output.clone()];
    while let Some(t) = stack.pop() {
        if !t.requires_grad() || nodes.contains_key(&t.id()) {
            continue;
        }
        if let Some(op) = t.op() {
            stack.extend(op.parents().into_iter().cloned());
        }
        nodes.insert(t.id(), t);
    }

    // a node needs a gradient iff it is a target or leads to one
    let mut needed: HashSet<u64> = HashSet::new();
    for (&id, t) in &nodes {
        let via_parent = t
            .op()
            .map(|op| op.parents().iter().any(|p| needed.contains(&p.id())))
            .unwrap_or(false);
        if targets.contains(&id) || via_parent {
            needed.insert(id);
        }
    }

    let _mode = set_grad_mode(create_graph);
    let mut grads: HashMap<u64, Tensor> = HashMap::new();
    if needed.contains(&output.id()) {
        grads.insert(output.id(), seed);
    }
    for (id, t) in nodes.iter().rev() {
        let Some(g) = grads.remove(id) else { continue };
        if targets.contains(id) {
            grads.insert(*id, g.clone());
        }
        let Some(op) = t.op() else { continue };
        let parents = op.parents();
        let wants: Vec<bool> = parents.iter().map(|p| needed.contains(&p.id())).collect();
        if !wants.iter().any(|&w| w) {
            continue;
        }
        let pgrads = op.backward(t, &g, &wants);
        for ((p, pg), want) in parents.iter().zip(pgrads).zip(wants) {
            let Some(pg) = pg else { continue };
            if !want {
                continue;
            }
            debug_assert_eq!(pg.shape(), p.shape());
            let acc = match grads.remove(&p.id()) {
                Some(prev) => prev.add(&pg),
                None => pg,
            };
            grads.insert(p.id(), acc);
        }
    }
    Ok(wrt
        .iter()
        .map(|t| grads.get(&t.id()).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect())
}
