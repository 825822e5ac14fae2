//! One forward-pass vocabulary, two executors.
//!
//! Model code is written once against `Backend` and runs either on the tape
//! (recording, differentiable) or directly on tensors (no recording, used for
//! prediction and validation where gradients are not needed). Both executors
//! apply identical kernels, so the two paths produce bit-identical values.

use super::params::ParamStore;
use super::tape::{Tape, Value};
use super::tensor::{softplus, Tensor};

pub trait Backend {
    type T: Clone;

    /// Fetch a registered parameter. Panics on unknown names: model code owns
    /// its naming scheme, so a miss is a bug, not an input error.
    fn param(&self, name: &str) -> Self::T;
    fn constant(&self, t: Tensor) -> Self::T;
    fn scalar(&self, v: f64) -> Self::T;
    /// Detached value of a node.
    fn value(&self, t: &Self::T) -> Tensor;

    fn add(&self, a: &Self::T, b: &Self::T) -> Self::T;
    fn sub(&self, a: &Self::T, b: &Self::T) -> Self::T;
    fn mul(&self, a: &Self::T, b: &Self::T) -> Self::T;
    fn div(&self, a: &Self::T, b: &Self::T) -> Self::T;
    fn neg(&self, a: &Self::T) -> Self::T;
    fn add_scalar(&self, a: &Self::T, c: f64) -> Self::T;
    fn mul_scalar(&self, a: &Self::T, c: f64) -> Self::T;
    fn matmul(&self, a: &Self::T, b: &Self::T) -> Self::T;
    fn tanh(&self, a: &Self::T) -> Self::T;
    fn relu(&self, a: &Self::T) -> Self::T;
    fn softplus(&self, a: &Self::T) -> Self::T;
    fn exp(&self, a: &Self::T) -> Self::T;
    fn log(&self, a: &Self::T) -> Self::T;
    fn square(&self, a: &Self::T) -> Self::T;
    fn sum(&self, a: &Self::T) -> Self::T;
    fn mean(&self, a: &Self::T) -> Self::T;
    fn slice(&self, a: &Self::T, start: usize, len: usize) -> Self::T;
    fn reshape(&self, a: &Self::T, shape: &[usize]) -> Self::T;
}

/// Recording executor; results carry gradients back to the leaves it
/// registers from the bound store.
pub struct TapeExec<'a> {
    pub tape: &'a Tape,
    pub store: &'a ParamStore,
}

impl<'a> TapeExec<'a> {
    pub fn new(tape: &'a Tape, store: &'a ParamStore) -> Self {
        TapeExec { tape, store }
    }
}

impl Backend for TapeExec<'_> {
    type T = Value;

    fn param(&self, name: &str) -> Value {
        let tensor = self
            .store
            .get(name)
            .unwrap_or_else(|_| panic!("unknown parameter `{name}`"));
        self.tape.leaf(name, tensor)
    }

    fn constant(&self, t: Tensor) -> Value {
        self.tape.constant(t)
    }

    fn scalar(&self, v: f64) -> Value {
        self.tape.scalar(v)
    }

    fn value(&self, t: &Value) -> Tensor {
        self.tape.value(*t)
    }

    fn add(&self, a: &Value, b: &Value) -> Value {
        self.tape.add(*a, *b)
    }
    fn sub(&self, a: &Value, b: &Value) -> Value {
        self.tape.sub(*a, *b)
    }
    fn mul(&self, a: &Value, b: &Value) -> Value {
        self.tape.mul(*a, *b)
    }
    fn div(&self, a: &Value, b: &Value) -> Value {
        self.tape.div(*a, *b)
    }
    fn neg(&self, a: &Value) -> Value {
        self.tape.neg(*a)
    }
    fn add_scalar(&self, a: &Value, c: f64) -> Value {
        self.tape.add_scalar(*a, c)
    }
    fn mul_scalar(&self, a: &Value, c: f64) -> Value {
        self.tape.mul_scalar(*a, c)
    }
    fn matmul(&self, a: &Value, b: &Value) -> Value {
        self.tape.matmul(*a, *b)
    }
    fn tanh(&self, a: &Value) -> Value {
        self.tape.tanh(*a)
    }
    fn relu(&self, a: &Value) -> Value {
        self.tape.relu(*a)
    }
    fn softplus(&self, a: &Value) -> Value {
        self.tape.softplus(*a)
    }
    fn exp(&self, a: &Value) -> Value {
        self.tape.exp(*a)
    }
    fn log(&self, a: &Value) -> Value {
        self.tape.log(*a)
    }
    fn square(&self, a: &Value) -> Value {
        self.tape.square(*a)
    }
    fn sum(&self, a: &Value) -> Value {
        self.tape.sum(*a)
    }
    fn mean(&self, a: &Value) -> Value {
        self.tape.mean(*a)
    }
    fn slice(&self, a: &Value, start: usize, len: usize) -> Value {
        self.tape.slice(*a, start, len)
    }
    fn reshape(&self, a: &Value, shape: &[usize]) -> Value {
        self.tape.reshape(*a, shape)
    }
}

/// Plain-value executor; no graph, no gradients.
pub struct RawExec<'a> {
    pub store: &'a ParamStore,
}

impl<'a> RawExec<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        RawExec { store }
    }
}

impl Backend for RawExec<'_> {
    type T = Tensor;

    fn param(&self, name: &str) -> Tensor {
        self.store
            .get(name)
            .unwrap_or_else(|_| panic!("unknown parameter `{name}`"))
            .clone()
    }

    fn constant(&self, t: Tensor) -> Tensor {
        t
    }

    fn scalar(&self, v: f64) -> Tensor {
        Tensor::scalar(v)
    }

    fn value(&self, t: &Tensor) -> Tensor {
        t.clone()
    }

    fn add(&self, a: &Tensor, b: &Tensor) -> Tensor {
        a.zip(b, |x, y| x + y)
    }
    fn sub(&self, a: &Tensor, b: &Tensor) -> Tensor {
        a.zip(b, |x, y| x - y)
    }
    fn mul(&self, a: &Tensor, b: &Tensor) -> Tensor {
        a.zip(b, |x, y| x * y)
    }
    fn div(&self, a: &Tensor, b: &Tensor) -> Tensor {
        a.zip(b, |x, y| x / y)
    }
    fn neg(&self, a: &Tensor) -> Tensor {
        a.map(|x| -x)
    }
    fn add_scalar(&self, a: &Tensor, c: f64) -> Tensor {
        a.map(|x| x + c)
    }
    fn mul_scalar(&self, a: &Tensor, c: f64) -> Tensor {
        a.map(|x| x * c)
    }
    fn matmul(&self, a: &Tensor, b: &Tensor) -> Tensor {
        a.matmul(b)
    }
    fn tanh(&self, a: &Tensor) -> Tensor {
        a.map(f64::tanh)
    }
    fn relu(&self, a: &Tensor) -> Tensor {
        a.map(|x| x.max(0.0))
    }
    fn softplus(&self, a: &Tensor) -> Tensor {
        a.map(softplus)
    }
    fn exp(&self, a: &Tensor) -> Tensor {
        a.map(f64::exp)
    }
    fn log(&self, a: &Tensor) -> Tensor {
        a.map(f64::ln)
    }
    fn square(&self, a: &Tensor) -> Tensor {
        a.map(|x| x * x)
    }
    fn sum(&self, a: &Tensor) -> Tensor {
        Tensor::scalar(a.sum())
    }
    fn mean(&self, a: &Tensor) -> Tensor {
        Tensor::scalar(a.sum() / a.numel() as f64)
    }
    fn slice(&self, a: &Tensor, start: usize, len: usize) -> Tensor {
        assert_eq!(a.shape().len(), 1, "slice expects a rank-1 value");
        Tensor::vector(a.data()[start..start + len].to_vec())
    }
    fn reshape(&self, a: &Tensor, shape: &[usize]) -> Tensor {
        a.reshaped(shape.to_vec()).expect("reshape")
    }
}
