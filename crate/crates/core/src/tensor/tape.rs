//! The reverse-mode tape: an append-only record of executed ops.
//!
//! One forward/backward pass owns a tape exclusively. Nodes are stored in
//! execution order, so every node's inputs precede it and a single reverse
//! sweep propagates gradients. `backward` consumes the tape; a second call
//! is an error.

use std::sync::{Arc, Mutex};

use super::{Elem, Tensor, Traced};
use crate::error::{Error, Result};

pub(crate) type BackwardFn<T> = Box<dyn Fn(&[T], &mut GradSink<'_, T>) + Send>;

struct Node<T: Elem> {
    parents: Vec<Option<usize>>,
    shape: Vec<usize>,
    backward: Option<BackwardFn<T>>,
    leaf: bool,
}

struct TapeInner<T: Elem> {
    nodes: Vec<Node<T>>,
    consumed: bool,
}

/// Shared handle to a recording tape.
pub struct Tape<T: Elem> {
    inner: Arc<Mutex<TapeInner<T>>>,
}

impl<T: Elem> Clone for Tape<T> {
    fn clone(&self) -> Self {
        Tape {
            inner: self.inner.clone(),
        }
    }
}

impl<T: Elem> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Elem> Tape<T> {
    pub fn new() -> Tape<T> {
        Tape {
            inner: Arc::new(Mutex::new(TapeInner {
                nodes: Vec::new(),
                consumed: false,
            })),
        }
    }

    pub(crate) fn same_tape(&self, other: &Tape<T>) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
    }

    pub(crate) fn record(
        &self,
        parents: Vec<Option<usize>>,
        shape: Vec<usize>,
        backward: BackwardFn<T>,
    ) -> usize {
        let mut inner = self.inner.lock().unwrap();
        let id = inner.nodes.len();
        inner.nodes.push(Node {
            parents,
            shape,
            backward: Some(backward),
            leaf: false,
        });
        id
    }

    /// Register `t` as a trainable leaf. The returned tensor shares storage
    /// with `t` and will receive a gradient from `backward`.
    pub fn leaf(&self, t: &Tensor<T>) -> Tensor<T> {
        let mut inner = self.inner.lock().unwrap();
        let id = inner.nodes.len();
        inner.nodes.push(Node {
            parents: Vec::new(),
            shape: t.shape().to_vec(),
            backward: None,
            leaf: true,
        });
        drop(inner);
        t.detach().with_node(self.clone(), id)
    }

    pub fn num_nodes(&self) -> usize {
        self.inner.lock().unwrap().nodes.len()
    }

    /// Reverse sweep from a scalar root. Returns gradients for every leaf
    /// reachable from the root. Consumes the recording: node closures are
    /// dropped as they run and the tape refuses a second backward.
    pub fn backward(&self, root: &Tensor<T>) -> Result<Gradients<T>> {
        let root_traced: &Traced<T> = root.traced().ok_or(Error::DetachedRoot)?;
        if !self.same_tape(&root_traced.tape) {
            return Err(Error::TapeMismatch { op: "backward" });
        }
        if root.numel() != 1 {
            return Err(Error::NonScalarRoot {
                shape: root.shape().to_vec(),
            });
        }

        let mut inner = self.inner.lock().unwrap();
        if inner.consumed {
            return Err(Error::TapeConsumed);
        }
        inner.consumed = true;

        let n = inner.nodes.len();
        let root_id = root_traced.id;
        let mut grads: Vec<Option<Vec<T>>> = (0..n).map(|_| None).collect();
        grads[root_id] = Some(vec![T::ONE]);

        let mut leaf_grads: Vec<Option<Tensor<T>>> = (0..n).map(|_| None).collect();

        for id in (0..=root_id).rev() {
            let Some(grad) = grads[id].take() else {
                continue;
            };
            let node = &mut inner.nodes[id];
            if node.leaf {
                leaf_grads[id] = Some(Tensor::from_vec(grad, &node.shape)?);
                continue;
            }
            let Some(bw) = node.backward.take() else {
                continue;
            };
            let parents = std::mem::take(&mut inner.nodes[id].parents);
            {
                let mut sink = GradSink {
                    parents: &parents,
                    grads: &mut grads,
                };
                bw(&grad, &mut sink);
            }
            // Drop the closure now to release captured activations early.
            drop(bw);
        }

        Ok(Gradients { leaf_grads })
    }
}

/// Accumulates per-input gradients during one node's backward step.
pub(crate) struct GradSink<'a, T: Elem> {
    parents: &'a [Option<usize>],
    grads: &'a mut [Option<Vec<T>>],
}

impl<T: Elem> GradSink<'_, T> {
    /// True when input slot `slot` wants a gradient (is traced).
    /// Backward code can skip work for constant inputs.
    pub fn wants(&self, slot: usize) -> bool {
        self.parents.get(slot).map(|p| p.is_some()).unwrap_or(false)
    }

    /// Add `grad` into input slot `slot`. Ignored for constant inputs.
    pub fn accum(&mut self, slot: usize, grad: Vec<T>) {
        let Some(&Some(pid)) = self.parents.get(slot) else {
            return;
        };
        match &mut self.grads[pid] {
            Some(existing) => {
                debug_assert_eq!(existing.len(), grad.len(), "gradient length mismatch");
                for (e, g) in existing.iter_mut().zip(grad) {
                    *e += g;
                }
            }
            slot @ None => *slot = Some(grad),
        }
    }
}

/// Result of a backward pass: gradient tensors keyed by leaf.
pub struct Gradients<T: Elem> {
    leaf_grads: Vec<Option<Tensor<T>>>,
}

impl<T: Elem> Gradients<T> {
    /// Gradient of the backward root w.r.t. leaf `t`, if `t` is a leaf that
    /// the root depends on.
    pub fn get(&self, t: &Tensor<T>) -> Option<&Tensor<T>> {
        let traced = t.traced()?;
        self.leaf_grads.get(traced.id)?.as_ref()
    }
}
