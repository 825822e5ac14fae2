//! Reverse-mode differentiation on a per-minibatch tape.
//!
//! Operations are recorded into a flat arena during the forward pass and
//! replayed in reverse to accumulate gradients. A tape lives for one loss
//! evaluation and is dropped afterwards; values are dense f64 tensors.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

use super::tensor::{sigmoid, softplus, Tensor};

static TAPE_COUNTER: AtomicU64 = AtomicU64::new(1);

/// Handle to a node on a tape. Only meaningful together with the tape that
/// produced it.
#[derive(Debug, Clone, Copy)]
pub struct Value {
    tape_id: u64,
    idx: usize,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Const,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    AddScalar(usize),
    MulScalar(usize, f64),
    Matmul(usize, usize),
    Tanh(usize),
    Relu(usize),
    Softplus(usize),
    Exp(usize),
    Log(usize),
    Square(usize),
    Sum(usize),
    Mean(usize),
    Slice { src: usize, start: usize, len: usize },
    Reshape(usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: RefCell<Vec<Node>>,
    leaves: RefCell<BTreeMap<String, usize>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: TAPE_COUNTER.fetch_add(1, Ordering::Relaxed),
            nodes: RefCell::new(Vec::new()),
            leaves: RefCell::new(BTreeMap::new()),
        }
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Value {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Value {
            tape_id: self.id,
            idx: nodes.len() - 1,
        }
    }

    fn check(&self, v: Value) -> usize {
        debug_assert_eq!(v.tape_id, self.id, "value from a different tape");
        v.idx
    }

    fn rg(&self, idx: usize) -> bool {
        self.nodes.borrow()[idx].requires_grad
    }

    fn val<R>(&self, idx: usize, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.nodes.borrow()[idx].value)
    }

    /// Register a named differentiable leaf. Re-registering the same name
    /// returns the existing node.
    pub fn leaf(&self, name: &str, tensor: &Tensor) -> Value {
        if let Some(&idx) = self.leaves.borrow().get(name) {
            return Value {
                tape_id: self.id,
                idx,
            };
        }
        let v = self.push(tensor.clone(), Op::Leaf, tensor.requires_grad());
        self.leaves.borrow_mut().insert(name.to_string(), v.idx);
        v
    }

    pub fn constant(&self, tensor: Tensor) -> Value {
        self.push(tensor, Op::Const, false)
    }

    pub fn scalar(&self, v: f64) -> Value {
        self.constant(Tensor::scalar(v))
    }

    /// Detached copy of a node's value.
    pub fn value(&self, v: Value) -> Tensor {
        let idx = self.check(v);
        self.nodes.borrow()[idx].value.clone()
    }

    pub fn shape(&self, v: Value) -> Vec<usize> {
        let idx = self.check(v);
        self.nodes.borrow()[idx].value.shape().to_vec()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    // -- recorded operations ------------------------------------------------

    pub fn add(&self, a: Value, b: Value) -> Value {
        let (ia, ib) = (self.check(a), self.check(b));
        let out = self.val(ia, |ta| self.val(ib, |tb| ta.zip(tb, |x, y| x + y)));
        self.push(out, Op::Add(ia, ib), self.rg(ia) || self.rg(ib))
    }

    pub fn sub(&self, a: Value, b: Value) -> Value {
        let (ia, ib) = (self.check(a), self.check(b));
        let out = self.val(ia, |ta| self.val(ib, |tb| ta.zip(tb, |x, y| x - y)));
        self.push(out, Op::Sub(ia, ib), self.rg(ia) || self.rg(ib))
    }

    pub fn mul(&self, a: Value, b: Value) -> Value {
        let (ia, ib) = (self.check(a), self.check(b));
        let out = self.val(ia, |ta| self.val(ib, |tb| ta.zip(tb, |x, y| x * y)));
        self.push(out, Op::Mul(ia, ib), self.rg(ia) || self.rg(ib))
    }

    pub fn div(&self, a: Value, b: Value) -> Value {
        let (ia, ib) = (self.check(a), self.check(b));
        let out = self.val(ia, |ta| self.val(ib, |tb| ta.zip(tb, |x, y| x / y)));
        self.push(out, Op::Div(ia, ib), self.rg(ia) || self.rg(ib))
    }

    pub fn neg(&self, a: Value) -> Value {
        let ia = self.check(a);
        let out = self.val(ia, |t| t.map(|x| -x));
        self.push(out, Op::Neg(ia), self.rg(ia))
    }

    pub fn add_scalar(&self, a: Value, c: f64) -> Value {
        let ia = self.check(a);
        let out = self.val(ia, |t| t.map(|x| x + c));
        self.push(out, Op::AddScalar(ia), self.rg(ia))
    }

    pub fn mul_scalar(&self, a: Value, c: f64) -> Value {
        let ia = self.check(a);
        let out = self.val(ia, |t| t.map(|x| x * c));
        self.push(out, Op::MulScalar(ia, c), self.rg(ia))
    }

    pub fn matmul(&self, a: Value, b: Value) -> Value {
        let (ia, ib) = (self.check(a), self.check(b));
        let out = self.val(ia, |ta| self.val(ib, |tb| ta.matmul(tb)));
        self.push(out, Op::Matmul(ia, ib), self.rg(ia) || self.rg(ib))
    }

    pub fn tanh(&self, a: Value) -> Value {
        let ia = self.check(a);
        let out = self.val(ia, |t| t.map(f64::tanh));
        self.push(out, Op::Tanh(ia), self.rg(ia))
    }

    pub fn relu(&self, a: Value) -> Value {
        let ia = self.check(a);
        let out = self.val(ia, |t| t.map(|x| x.max(0.0)));
        self.push(out, Op::Relu(ia), self.rg(ia))
    }

    pub fn softplus(&self, a: Value) -> Value {
        let ia = self.check(a);
        let out = self.val(ia, |t| t.map(softplus));
        self.push(out, Op::Softplus(ia), self.rg(ia))
    }

    pub fn exp(&self, a: Value) -> Value {
        let ia = self.check(a);
        let out = self.val(ia, |t| t.map(f64::exp));
        self.push(out, Op::Exp(ia), self.rg(ia))
    }

    pub fn log(&self, a: Value) -> Value {
        let ia = self.check(a);
        let out = self.val(ia, |t| t.map(f64::ln));
        self.push(out, Op::Log(ia), self.rg(ia))
    }

    pub fn square(&self, a: Value) -> Value {
        let ia = self.check(a);
        let out = self.val(ia, |t| t.map(|x| x * x));
        self.push(out, Op::Square(ia), self.rg(ia))
    }

    pub fn sum(&self, a: Value) -> Value {
        let ia = self.check(a);
        let out = self.val(ia, |t| Tensor::scalar(t.sum()));
        self.push(out, Op::Sum(ia), self.rg(ia))
    }

    pub fn mean(&self, a: Value) -> Value {
        let ia = self.check(a);
        let out = self.val(ia, |t| Tensor::scalar(t.sum() / t.numel() as f64));
        self.push(out, Op::Mean(ia), self.rg(ia))
    }

    /// Contiguous slice of a rank-1 value.
    pub fn slice(&self, a: Value, start: usize, len: usize) -> Value {
        let ia = self.check(a);
        let out = self.val(ia, |t| {
            assert_eq!(t.shape().len(), 1, "slice expects a rank-1 value");
            assert!(start + len <= t.numel(), "slice out of bounds");
            Tensor::vector(t.data()[start..start + len].to_vec())
        });
        self.push(out, Op::Slice { src: ia, start, len }, self.rg(ia))
    }

    pub fn reshape(&self, a: Value, shape: &[usize]) -> Value {
        let ia = self.check(a);
        let out = self.val(ia, |t| t.reshaped(shape.to_vec()).expect("reshape"));
        self.push(out, Op::Reshape(ia), self.rg(ia))
    }

    // -- reverse pass --------------------------------------------------------

    /// Reverse sweep from a scalar output. Returns one gradient per
    /// `requires_grad` leaf (zeros for leaves the output does not reach).
    pub fn backward(&self, output: Value) -> Result<BTreeMap<String, Tensor>> {
        let out_idx = self.check(output);
        let nodes = self.nodes.borrow();
        let out_node = &nodes[out_idx];
        if out_node.value.numel() != 1 {
            return Err(Error::NonScalarOutput(out_node.value.shape().to_vec()));
        }
        if !out_node.requires_grad {
            return Err(Error::DetachedGraph);
        }

        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[out_idx] = Some(Tensor::full(out_node.value.shape(), 1.0));

        for idx in (0..=out_idx).rev() {
            let node = &nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(grad) = grads[idx].take() else {
                continue;
            };
            match &node.op {
                Op::Leaf | Op::Const => {
                    grads[idx] = Some(grad);
                }
                Op::Add(a, b) => {
                    accumulate_if(&mut grads, &nodes, *a, || grad.clone());
                    accumulate_if(&mut grads, &nodes, *b, || grad.clone());
                }
                Op::Sub(a, b) => {
                    accumulate_if(&mut grads, &nodes, *a, || grad.clone());
                    accumulate_if(&mut grads, &nodes, *b, || grad.map(|g| -g));
                }
                Op::Mul(a, b) => {
                    accumulate_if(&mut grads, &nodes, *a, || {
                        grad.zip(&nodes[*b].value, |g, y| g * y)
                    });
                    accumulate_if(&mut grads, &nodes, *b, || {
                        grad.zip(&nodes[*a].value, |g, x| g * x)
                    });
                }
                Op::Div(a, b) => {
                    accumulate_if(&mut grads, &nodes, *a, || {
                        grad.zip(&nodes[*b].value, |g, y| g / y)
                    });
                    accumulate_if(&mut grads, &nodes, *b, || {
                        let num = grad.zip(&nodes[*a].value, |g, x| g * x);
                        num.zip(&nodes[*b].value, |n, y| -n / (y * y))
                    });
                }
                Op::Neg(a) => {
                    accumulate_if(&mut grads, &nodes, *a, || grad.map(|g| -g));
                }
                Op::AddScalar(a) => {
                    accumulate_if(&mut grads, &nodes, *a, || grad.clone());
                }
                Op::MulScalar(a, c) => {
                    let c = *c;
                    accumulate_if(&mut grads, &nodes, *a, || grad.map(|g| g * c));
                }
                Op::Matmul(a, b) => {
                    let lhs = &nodes[*a].value;
                    let rhs = &nodes[*b].value;
                    // Lift rank-1 operands to columns so one rule covers both.
                    let g2 = as_matrix(&grad);
                    if nodes[*a].requires_grad {
                        let rhs2 = as_matrix(rhs);
                        let ga = g2.matmul(&rhs2.transpose());
                        accumulate(&mut grads, *a, reshape_like(ga, lhs));
                    }
                    if nodes[*b].requires_grad {
                        let gb = lhs.transpose().matmul(&g2);
                        accumulate(&mut grads, *b, reshape_like(gb, rhs));
                    }
                }
                Op::Tanh(a) => {
                    accumulate_if(&mut grads, &nodes, *a, || {
                        grad.zip(&node.value, |g, y| g * (1.0 - y * y))
                    });
                }
                Op::Relu(a) => {
                    accumulate_if(&mut grads, &nodes, *a, || {
                        grad.zip(&nodes[*a].value, |g, x| if x > 0.0 { g } else { 0.0 })
                    });
                }
                Op::Softplus(a) => {
                    accumulate_if(&mut grads, &nodes, *a, || {
                        grad.zip(&nodes[*a].value, |g, x| g * sigmoid(x))
                    });
                }
                Op::Exp(a) => {
                    accumulate_if(&mut grads, &nodes, *a, || {
                        grad.zip(&node.value, |g, y| g * y)
                    });
                }
                Op::Log(a) => {
                    accumulate_if(&mut grads, &nodes, *a, || {
                        grad.zip(&nodes[*a].value, |g, x| g / x)
                    });
                }
                Op::Square(a) => {
                    accumulate_if(&mut grads, &nodes, *a, || {
                        grad.zip(&nodes[*a].value, |g, x| g * 2.0 * x)
                    });
                }
                Op::Sum(a) => {
                    let g = grad.item();
                    accumulate_if(&mut grads, &nodes, *a, || {
                        Tensor::full(nodes[*a].value.shape(), g)
                    });
                }
                Op::Mean(a) => {
                    let n = nodes[*a].value.numel() as f64;
                    let g = grad.item() / n;
                    accumulate_if(&mut grads, &nodes, *a, || {
                        Tensor::full(nodes[*a].value.shape(), g)
                    });
                }
                Op::Slice { src, start, len } => {
                    accumulate_if(&mut grads, &nodes, *src, || {
                        let mut full = Tensor::zeros(nodes[*src].value.shape());
                        full.data_mut()[*start..*start + *len].copy_from_slice(grad.data());
                        full
                    });
                }
                Op::Reshape(a) => {
                    accumulate_if(&mut grads, &nodes, *a, || {
                        grad.reshaped(nodes[*a].value.shape().to_vec()).expect("reshape grad")
                    });
                }
            }
        }

        let mut out = BTreeMap::new();
        for (name, &idx) in self.leaves.borrow().iter() {
            if nodes[idx].requires_grad {
                let g = grads[idx]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(nodes[idx].value.shape()));
                out.insert(name.clone(), g);
            }
        }
        Ok(out)
    }
}

fn as_matrix(t: &Tensor) -> Tensor {
    match t.shape().len() {
        2 => t.clone(),
        1 => Tensor::matrix(t.shape()[0], 1, t.data().to_vec()),
        _ => Tensor::matrix(1, 1, t.data().to_vec()),
    }
}

fn reshape_like(t: Tensor, like: &Tensor) -> Tensor {
    t.reshaped(like.shape().to_vec()).expect("gradient shape")
}

fn accumulate(grads: &mut [Option<Tensor>], idx: usize, delta: Tensor) {
    match &mut grads[idx] {
        Some(g) => *g = g.zip(&delta, |a, b| a + b),
        slot => *slot = Some(delta),
    }
}

fn accumulate_if(
    grads: &mut [Option<Tensor>],
    nodes: &[Node],
    idx: usize,
    delta: impl FnOnce() -> Tensor,
) {
    if nodes[idx].requires_grad {
        accumulate(grads, idx, delta());
    }
}
