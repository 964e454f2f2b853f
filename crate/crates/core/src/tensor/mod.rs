//! Dense row-major tensors with optional reverse-mode autodiff.
//!
//! A [`Tensor`] is an immutable value: shape plus `Arc`-shared contiguous
//! storage. Ops produce new tensors. When any operand is registered on a
//! [`Tape`], the op records itself and `Tape::backward` later replays the
//! recording in reverse to accumulate leaf gradients.

mod elem;
pub mod io;
pub(crate) mod kernels;
mod ops;
mod tape;

pub use elem::{DType, Elem};
pub use tape::{Gradients, Tape};

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use tape::GradSink;

/// Global toggle for NaN/Inf detection on op results. On by default;
/// benchmark paths switch it off so throughput numbers do not pay for it.
static FINITE_CHECKS: AtomicBool = AtomicBool::new(true);

pub fn set_finite_checks(on: bool) {
    FINITE_CHECKS.store(on, Ordering::Relaxed);
}

pub fn finite_checks_enabled() -> bool {
    FINITE_CHECKS.load(Ordering::Relaxed)
}

#[derive(Clone)]
pub(crate) struct Traced<T: Elem> {
    tape: Tape<T>,
    id: usize,
}

/// Dense N-dimensional array. Cheap to clone (storage is shared).
#[derive(Clone)]
pub struct Tensor<T: Elem> {
    shape: Vec<usize>,
    data: Arc<Vec<T>>,
    node: Option<Traced<T>>,
}

impl<T: Elem> Tensor<T> {
    pub fn from_vec(data: Vec<T>, shape: &[usize]) -> Result<Tensor<T>> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::invalid(
                "tensor",
                format!("shape {:?} wants {} values, got {}", shape, numel, data.len()),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: Arc::new(data),
            node: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Tensor<T> {
        let numel: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: Arc::new(vec![T::ZERO; numel]),
            node: None,
        }
    }

    pub fn full(shape: &[usize], value: T) -> Tensor<T> {
        let numel: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: Arc::new(vec![value; numel]),
            node: None,
        }
    }

    pub fn ones(shape: &[usize]) -> Tensor<T> {
        Tensor::full(shape, T::ONE)
    }

    pub fn scalar(value: T) -> Tensor<T> {
        Tensor::full(&[], value)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn dtype(&self) -> DType {
        T::DTYPE
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub(crate) fn data_arc(&self) -> Arc<Vec<T>> {
        self.data.clone()
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.data.to_vec()
    }

    /// Extract the single value of a scalar (or one-element) tensor.
    pub fn item(&self) -> Result<T> {
        if self.numel() != 1 {
            return Err(Error::invalid(
                "item",
                format!("expected one element, shape is {:?}", self.shape),
            ));
        }
        Ok(self.data[0])
    }

    /// Value at a multi-dimensional index (row-major).
    pub fn at(&self, index: &[usize]) -> T {
        debug_assert_eq!(index.len(), self.shape.len());
        let mut flat = 0;
        for (i, &ix) in index.iter().enumerate() {
            debug_assert!(ix < self.shape[i]);
            flat = flat * self.shape[i] + ix;
        }
        self.data[flat]
    }

    pub fn is_traced(&self) -> bool {
        self.node.is_some()
    }

    /// Same values, not attached to any tape.
    pub fn detach(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.clone(),
            node: None,
        }
    }

    /// Convert between element types (f32 ↔ f64).
    pub fn cast<U: Elem>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: Arc::new(self.data.iter().map(|&v| U::from_f64(v.to_f64())).collect()),
            node: None,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn traced(&self) -> Option<&Traced<T>> {
        self.node.as_ref()
    }

    pub(crate) fn with_node(mut self, tape: Tape<T>, id: usize) -> Tensor<T> {
        self.node = Some(Traced { tape, id });
        self
    }
}

impl<T: Elem> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.numel() <= 16 {
            write!(f, " {:?}", &self.data[..])?;
        }
        if self.node.is_some() {
            write!(f, " (traced)")?;
        }
        Ok(())
    }
}

/// Build an op result, recording it on the operands' tape when present.
///
/// `backward` receives the upstream gradient (same layout as `data`) and a
/// sink mapping input slots (positions in `inputs`) to gradient buffers.
/// Backward closures must work on raw slices only; they run while the tape
/// lock is held.
pub(crate) fn make_result<T, F>(
    op: &'static str,
    shape: Vec<usize>,
    data: Arc<Vec<T>>,
    inputs: &[&Tensor<T>],
    backward: F,
) -> Result<Tensor<T>>
where
    T: Elem,
    F: Fn(&[T], &mut GradSink<'_, T>) + Send + 'static,
{
    debug_assert_eq!(shape.iter().product::<usize>(), data.len(), "{op}: bad result shape");
    if finite_checks_enabled() && !data.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { op });
    }

    let mut tape: Option<&Tape<T>> = None;
    for input in inputs {
        if let Some(tr) = input.traced() {
            match tape {
                None => tape = Some(&tr.tape),
                Some(t) => {
                    if !t.same_tape(&tr.tape) {
                        return Err(Error::TapeMismatch { op });
                    }
                }
            }
        }
    }

    let out = Tensor {
        shape,
        data,
        node: None,
    };
    match tape {
        None => Ok(out),
        Some(tape) => {
            let parents: Vec<Option<usize>> = inputs
                .iter()
                .map(|i| i.traced().map(|tr| tr.id))
                .collect();
            let tape = tape.clone();
            let id = tape.record(parents, out.shape.clone(), Box::new(backward));
            Ok(out.with_node(tape, id))
        }
    }
}
