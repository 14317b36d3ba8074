use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use crate::element::Element;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

type BackwardFn<T> = Box<dyn Fn(&Tensor<T>) -> Vec<Option<Tensor<T>>>>;

struct Node<T> {
    parents: Vec<Option<usize>>,
    backward: Option<BackwardFn<T>>,
}

/// Records operations on tracked [`Var`]s for one reverse-mode sweep.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order. Dropping the tape releases every saved activation.
pub struct Tape<T = f32> {
    nodes: Rc<RefCell<Vec<Node<T>>>>,
}

impl<T> Clone for Tape<T> {
    fn clone(&self) -> Self {
        Self { nodes: Rc::clone(&self.nodes) }
    }
}

impl<T> fmt::Debug for Tape<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tape({} nodes)", self.nodes.borrow().len())
    }
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Rc::new(RefCell::new(Vec::new())) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A trainable input whose gradient is kept after [`Tape::backward`].
    pub fn leaf(&self, value: Tensor<T>) -> Var<T> {
        let id = self.push(Node { parents: Vec::new(), backward: None });
        Var { value, tracked: Some((self.clone(), id)) }
    }

    fn push(&self, node: Node<T>) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        nodes.len() - 1
    }

    fn same(&self, other: &Tape<T>) -> bool {
        Rc::ptr_eq(&self.nodes, &other.nodes)
    }

    /// Gradients of the scalar `loss` with respect to every leaf that
    /// contributed to it.
    pub fn backward(&self, loss: &Var<T>) -> Result<Gradients<T>> {
        let Some((tape, loss_id)) = &loss.tracked else {
            return Err(Error::Untracked);
        };
        assert!(self.same(tape), "backward: loss was recorded on a different tape");
        if loss.value.numel() != 1 {
            return Err(Error::NonScalarLoss(loss.value.shape().to_vec()));
        }
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; nodes.len()];
        grads[*loss_id] = Some(Tensor::ones(loss.value.shape().to_vec()));
        for id in (0..=*loss_id).rev() {
            let node = &nodes[id];
            let Some(backward) = &node.backward else { continue };
            let Some(grad) = grads[id].take() else { continue };
            let parent_grads = backward(&grad);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (parent, pg) in node.parents.iter().zip(parent_grads) {
                if let (Some(p), Some(pg)) = (parent, pg) {
                    match &mut grads[*p] {
                        Some(acc) => acc.add_assign(&pg)?,
                        slot @ None => *slot = Some(pg),
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// Leaf gradients produced by [`Tape::backward`].
pub struct Gradients<T = f32> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Element> Gradients<T> {
    pub fn get(&self, var: &Var<T>) -> Option<&Tensor<T>> {
        let (_, id) = var.tracked.as_ref()?;
        self.grads.get(*id)?.as_ref()
    }

    /// Gradient of `var`, or zeros of its shape when it did not influence the loss.
    pub fn get_or_zeros(&self, var: &Var<T>) -> Tensor<T> {
        self.get(var).cloned().unwrap_or_else(|| Tensor::zeros(var.shape().to_vec()))
    }
}

/// A tensor value, optionally tracked on a [`Tape`].
///
/// Operations on untracked inputs only compute values; as soon as one input
/// is tracked the result is recorded.
#[derive(Clone)]
pub struct Var<T = f32> {
    value: Tensor<T>,
    tracked: Option<(Tape<T>, usize)>,
}

impl<T: Element> fmt::Debug for Var<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("shape", &self.value.shape())
            .field("node", &self.tracked.as_ref().map(|(_, id)| *id))
            .finish()
    }
}

impl<T: Element> From<Tensor<T>> for Var<T> {
    fn from(value: Tensor<T>) -> Self {
        Self::constant(value)
    }
}

impl<T: Element> Var<T> {
    pub fn constant(value: Tensor<T>) -> Self {
        Self { value, tracked: None }
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn into_value(self) -> Tensor<T> {
        self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn is_tracked(&self) -> bool {
        self.tracked.is_some()
    }

    /// Same value, cut off from the tape.
    pub fn detach(&self) -> Self {
        Self::constant(self.value.clone())
    }

    /// Wraps `value` as the output of an operation over `inputs`.
    ///
    /// `backward` receives the output gradient and a mask of which inputs
    /// need a gradient; it returns one entry per input.
    pub fn record<F>(value: Tensor<T>, inputs: &[&Var<T>], backward: F) -> Self
    where
        F: Fn(&Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>> + 'static,
    {
        let Some(tape) = inputs.iter().find_map(|v| v.tracked.as_ref().map(|(t, _)| t.clone())) else {
            return Self::constant(value);
        };
        let parents: Vec<Option<usize>> = inputs
            .iter()
            .map(|v| {
                v.tracked.as_ref().map(|(t, id)| {
                    assert!(tape.same(t), "operands recorded on different tapes");
                    *id
                })
            })
            .collect();
        let needs: Vec<bool> = parents.iter().map(Option::is_some).collect();
        let id = tape.push(Node {
            parents,
            backward: Some(Box::new(move |g| backward(g, &needs))),
        });
        Self { value, tracked: Some((tape, id)) }
    }
}
