use std::cell::{Cell, RefCell};
use std::collections::BTreeMap;
use std::fmt;
use std::rc::Rc;

use crate::activation::Activation;
use crate::error::{Result, TensorError};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// How the right-hand operand of a binary op lines up with the left one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Broadcast {
    Same,
    /// `b` repeats `reps` times along the leading dimensions of `a`.
    Leading { reps: usize },
    Scalar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Recorded operation. Parent references are node indices on the same tape.
pub(crate) enum Op {
    Leaf,
    Param,
    MatMul(usize, usize),
    Transpose(usize),
    Binary(BinaryOp, usize, usize, Broadcast),
    Scale(usize, f64),
    AddScalar(usize),
    Unary(Activation, usize),
    Softmax {
        x: usize,
        outer: usize,
        len: usize,
        inner: usize,
    },
    SegmentSoftmax {
        x: usize,
        segments: Rc<[usize]>,
        count: usize,
    },
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        normalized: Rc<[f64]>,
        inv_std: Rc<[f64]>,
    },
    Conv1d {
        input: usize,
        kernel: usize,
        bias: Option<usize>,
        dims: ConvDims,
    },
    Dropout {
        x: usize,
        mask: Rc<[f64]>,
    },
    CrossEntropy {
        logits: usize,
        targets: Rc<[usize]>,
        probs: Rc<[f64]>,
    },
    IndexSelect {
        x: usize,
        index: Rc<[usize]>,
    },
    IndexAdd {
        x: usize,
        index: Rc<[usize]>,
    },
    ScaleRows {
        x: usize,
        scale: usize,
    },
    ConcatCols(Vec<usize>),
    Reshape(usize),
    Sum(usize),
    Mean(usize),
    L2NormalizeRows {
        x: usize,
        norms: Rc<[f64]>,
    },
    Clamp {
        x: usize,
        lo: f64,
        hi: f64,
    },
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvDims {
    pub batch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub width: usize,
    pub kernel: usize,
    pub padding: usize,
}

pub(crate) struct Node {
    pub value: Rc<Tensor>,
    pub op: Op,
    pub requires_grad: bool,
}

/// Records operations of one forward pass for a single reverse sweep.
///
/// A tape is single-threaded and single-use: after [`Tape::backward`] has
/// run, further backward calls fail with [`TensorError::StaleTape`].
pub struct Tape {
    pub(crate) nodes: RefCell<Vec<Node>>,
    params: RefCell<BTreeMap<ParamId, usize>>,
    consumed: Cell<bool>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    pub(crate) tape: &'t Tape,
    pub(crate) id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            params: RefCell::new(BTreeMap::new()),
            consumed: Cell::new(false),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records a value that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push_unchecked(value, Op::Leaf, false)
    }

    /// Records a differentiable input.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push_unchecked(value, Op::Leaf, true)
    }

    /// Records a parameter from `store`. Repeated calls for the same id on one
    /// tape return the same node so gradients accumulate in one place.
    pub fn param(&self, store: &ParamStore, id: ParamId) -> Var<'_> {
        if let Some(&node) = self.params.borrow().get(&id) {
            return Var { tape: self, id: node };
        }
        let var = self.push_unchecked(store.value(id).clone(), Op::Param, true);
        self.params.borrow_mut().insert(id, var.id);
        var
    }

    pub(crate) fn push_unchecked(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            requires_grad,
        });
        Var { tape: self, id }
    }

    /// Records the result of a forward op, rejecting non-finite outputs.
    pub(crate) fn push(
        &self,
        name: &'static str,
        value: Tensor,
        op: Op,
        parents: &[usize],
    ) -> Result<Var<'_>> {
        if !value.is_finite() {
            return Err(TensorError::Numeric {
                op: name,
                detail: "non-finite value in forward output".into(),
            });
        }
        let requires_grad = {
            let nodes = self.nodes.borrow();
            parents.iter().any(|&p| nodes[p].requires_grad)
        };
        Ok(self.push_unchecked(value, op, requires_grad))
    }

    pub(crate) fn value_of(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    /// Runs the reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(TensorError::InvalidArgument {
                op: "backward",
                detail: "loss was recorded on a different tape".into(),
            });
        }
        if self.consumed.replace(true) {
            return Err(TensorError::StaleTape);
        }
        let nodes = self.nodes.borrow();
        let loss_value = &nodes[loss.id].value;
        if loss_value.numel() != 1 {
            return Err(TensorError::NonScalarLoss(loss_value.shape().to_vec()));
        }

        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(loss.id + 1);
        grads.resize_with(loss.id + 1, || None);
        grads[loss.id] = Some(Tensor::ones(loss_value.shape().to_vec()));

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(grad) = grads[id].take() else {
                continue;
            };
            crate::backward::propagate(&nodes, node, &grad, &mut grads);
            if matches!(node.op, Op::Leaf | Op::Param) {
                grads[id] = Some(grad);
            }
        }

        let params = self
            .params
            .borrow()
            .iter()
            .map(|(&pid, &node)| (pid, node))
            .collect();
        Ok(Gradients { grads, params })
    }
}

/// Result of a backward pass. Only leaf and parameter gradients are retained.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, usize)>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params
            .iter()
            .find(|(pid, _)| *pid == id)
            .and_then(|&(_, node)| self.grads.get(node).and_then(Option::as_ref))
    }

    /// Adds every parameter gradient into the store's `grad` buffers.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for &(pid, node) in &self.params {
            if let Some(Some(g)) = self.grads.get(node) {
                store.get_mut(pid).grad.add_assign(g);
            }
        }
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn item(&self) -> f64 {
        self.value().data()[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }
}
