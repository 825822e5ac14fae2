//! Dense f64 tensors of rank 0..=2.
//!
//! Everything in this crate is small enough that a flat `Vec<f64>` with
//! row-major layout is the right representation. Tensors are plain values:
//! cloning copies the data, and they can be moved freely across threads.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert!(shape.len() <= 2, "rank > 2 is unsupported");
        let numel: usize = shape.iter().product();
        assert_eq!(
            numel,
            data.len(),
            "shape {:?} does not match data length {}",
            shape,
            data.len()
        );
        Tensor {
            shape,
            data,
            requires_grad: false,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::new(vec![], vec![v])
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor::new(vec![data.len()], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor::new(shape.to_vec(), vec![0.0; shape.iter().product()])
    }

    pub fn full(shape: &[usize], v: f64) -> Self {
        Tensor::new(shape.to_vec(), vec![v; shape.iter().product()])
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, flag: bool) {
        self.requires_grad = flag;
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// The single element of a scalar (or one-element) tensor.
    pub fn item(&self) -> f64 {
        assert!(self.is_scalar(), "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[0],
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 | 1 => 1,
            _ => self.shape[1],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::new(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(
            self.shape, other.shape,
            "elementwise op on mismatched shapes {:?} vs {:?}",
            self.shape, other.shape
        );
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Tensor::new(self.shape.clone(), data)
    }

    /// Matrix product. The left operand must be rank 2; the right operand
    /// may be rank 2 ([k,n] -> [m,n]) or rank 1 ([k] -> [m]).
    pub fn matmul(&self, rhs: &Tensor) -> Tensor {
        assert_eq!(self.shape.len(), 2, "matmul lhs must be rank 2");
        let (m, k) = (self.shape[0], self.shape[1]);
        match rhs.shape.len() {
            1 => {
                assert_eq!(rhs.shape[0], k, "matmul inner dims {} vs {}", k, rhs.shape[0]);
                let mut out = vec![0.0; m];
                for i in 0..m {
                    let row = &self.data[i * k..(i + 1) * k];
                    let mut acc = 0.0;
                    for (a, b) in row.iter().zip(&rhs.data) {
                        acc += a * b;
                    }
                    out[i] = acc;
                }
                Tensor::vector(out)
            }
            2 => {
                let (k2, n) = (rhs.shape[0], rhs.shape[1]);
                assert_eq!(k, k2, "matmul inner dims {} vs {}", k, k2);
                let mut out = vec![0.0; m * n];
                for i in 0..m {
                    for p in 0..k {
                        let a = self.data[i * k + p];
                        if a == 0.0 {
                            continue;
                        }
                        let rrow = &rhs.data[p * n..(p + 1) * n];
                        let orow = &mut out[i * n..(i + 1) * n];
                        for (o, b) in orow.iter_mut().zip(rrow) {
                            *o += a * b;
                        }
                    }
                }
                Tensor::matrix(m, n, out)
            }
            _ => panic!("matmul rhs must be rank 1 or 2"),
        }
    }

    /// Transpose of a rank-2 tensor (rank-1 treated as a column).
    pub fn transpose(&self) -> Tensor {
        match self.shape.len() {
            1 => Tensor::matrix(1, self.shape[0], self.data.clone()),
            2 => {
                let (m, n) = (self.shape[0], self.shape[1]);
                let mut out = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        out[j * m + i] = self.data[i * n + j];
                    }
                }
                Tensor::matrix(n, m, out)
            }
            _ => panic!("transpose on rank-0 tensor"),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} ({} elems) to {:?}",
                self.shape,
                self.data.len(),
                shape
            )));
        }
        Ok(Tensor::new(shape, self.data.clone()))
    }
}

/// Numerically stable softplus, `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic sigmoid; the derivative of softplus.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
