//! Trainable parameters and their per-forward-pass graph bindings.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use crate::tensor::graph::{Graph, Var};
use crate::tensor::Tensor;

/// A named trainable tensor that outlives any single graph.
///
/// Cloning shares the underlying storage; models hand out `Vec<Param>` in a
/// deterministic order for the optimizer and the checkpointer.
#[derive(Clone)]
pub struct Param {
    inner: Rc<RefCell<Tensor>>,
    name: Rc<str>,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        Param {
            inner: Rc::new(RefCell::new(value)),
            name: name.into().into(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> Tensor {
        self.inner.borrow().clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().shape().to_vec()
    }

    pub fn numel(&self) -> usize {
        self.inner.borrow().numel()
    }

    pub fn set(&self, value: Tensor) {
        *self.inner.borrow_mut() = value;
    }

    /// In-place update used by the optimizer.
    pub fn update(&self, f: impl FnOnce(&mut Tensor)) {
        f(&mut self.inner.borrow_mut())
    }

    /// Stable identity key: two clones of the same parameter share it.
    pub fn key(&self) -> usize {
        Rc::as_ptr(&self.inner) as usize
    }
}

/// One forward pass: a graph plus the parameter leaves bound onto it.
///
/// Binding the same [`Param`] twice (weight sharing) returns the same node,
/// so fan-out gradient accumulation does the right thing.
pub struct Session {
    graph: Graph,
    bound: RefCell<HashMap<usize, Var>>,
    trainable: bool,
}

impl Session {
    pub fn new() -> Self {
        Session {
            graph: Graph::new(),
            bound: RefCell::new(HashMap::new()),
            trainable: true,
        }
    }

    /// A session whose parameter leaves do not track gradients (inference).
    pub fn frozen() -> Self {
        Session {
            graph: Graph::new(),
            bound: RefCell::new(HashMap::new()),
            trainable: false,
        }
    }

    /// Wraps an existing graph (used by gradient checks that own the graph).
    pub fn with_graph(graph: Graph, trainable: bool) -> Self {
        Session {
            graph,
            bound: RefCell::new(HashMap::new()),
            trainable,
        }
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    /// Binds a parameter onto the graph, interning repeat bindings.
    pub fn bind(&self, p: &Param) -> Var {
        if let Some(v) = self.bound.borrow().get(&p.key()) {
            return v.clone();
        }
        let var = self.graph.leaf(p.value(), self.trainable);
        self.bound.borrow_mut().insert(p.key(), var.clone());
        var
    }

    /// Graph node for a parameter if it was bound this pass.
    pub fn binding(&self, p: &Param) -> Option<Var> {
        self.bound.borrow().get(&p.key()).cloned()
    }

    /// Gradient of the bound parameter after `backward`, if any.
    pub fn grad_of(&self, p: &Param) -> Option<Tensor> {
        self.binding(p).and_then(|v| v.grad())
    }

    pub fn constant(&self, t: Tensor) -> Var {
        self.graph.constant(t)
    }

    pub fn input(&self, t: Tensor) -> Var {
        self.graph.leaf(t, false)
    }
}

impl Default for Session {
    fn default() -> Self {
        Session::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bind_interns_by_identity() {
        let s = Session::new();
        let p = Param::new("w", Tensor::from_slice(&[2.0]));
        let a = s.bind(&p);
        let b = s.bind(&p.clone());
        // y = w * w through two bindings of the same node
        let y = a.mul(&b).unwrap().sum();
        y.backward().unwrap();
        assert_eq!(s.grad_of(&p).unwrap().data(), &[4.0]);
    }

    #[test]
    fn frozen_session_tracks_no_grads() {
        let s = Session::frozen();
        let p = Param::new("w", Tensor::from_slice(&[2.0]));
        let v = s.bind(&p);
        v.square().sum().backward().unwrap();
        assert!(s.grad_of(&p).is_none());
    }
}
