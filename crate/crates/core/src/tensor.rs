//! Dense row-major `f64` tensors with the handful of operations the layer
//! zoo and the optimizers need.
//!
//! Reductions (norms, means, variances, matmul accumulation) always run in a
//! fixed sequential order so that repeated runs are bitwise reproducible.
//! Performance is deliberately plain; see the crate docs for non-goals.

use crate::error::{CoreError, Result};

/// Dense n-dimensional array of 64-bit floats in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn shape_product(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    /// Builds a tensor from a shape and a row-major data buffer.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape_product(&shape) != data.len() {
            return Err(CoreError::ShapeMismatch(format!(
                "shape {:?} implies {} elements, data has {}",
                shape,
                shape_product(&shape),
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    /// All-zero tensor of the given shape.
    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape_product(&shape);
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    /// Tensor filled with a constant.
    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let n = shape_product(&shape);
        Tensor {
            shape,
            data: vec![value; n],
        }
    }

    /// 1-D tensor from a slice.
    pub fn from_slice(values: &[f64]) -> Self {
        Tensor {
            shape: vec![values.len()],
            data: values.to_vec(),
        }
    }

    /// 2-D tensor from rows; every row must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(CoreError::ShapeMismatch(format!(
                    "ragged rows: expected {} columns, got {}",
                    c,
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Tensor::new(vec![r, c], data)
    }

    /// Identity matrix of side `n`.
    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(vec![n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Total number of elements.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row count of a 2-D tensor.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Column count of a 2-D tensor.
    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    /// Element of a 2-D tensor.
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols() + col]
    }

    pub fn is_all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn require_same_shape(&self, other: &Tensor, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(CoreError::ShapeMismatch(format!(
                "{op}: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    fn require_rank2(&self, op: &str) -> Result<()> {
        if self.shape.len() != 2 {
            return Err(CoreError::ShapeMismatch(format!(
                "{op} requires a 2-D tensor, got shape {:?}",
                self.shape
            )));
        }
        Ok(())
    }

    /// Euclidean norm, summed in a fixed sequential order.
    pub fn l2_norm(&self) -> Result<f64> {
        if self.data.is_empty() {
            return Err(CoreError::InvalidArgument(
                "l2_norm of an empty tensor".into(),
            ));
        }
        let mut acc = 0.0;
        for &v in &self.data {
            acc += v * v;
        }
        Ok(acc.sqrt())
    }

    /// Returns `self + alpha * x` elementwise.
    pub fn axpy(alpha: f64, x: &Tensor, y: &Tensor) -> Result<Tensor> {
        x.require_same_shape(y, "axpy")?;
        let data = y
            .data
            .iter()
            .zip(&x.data)
            .map(|(&yv, &xv)| yv + alpha * xv)
            .collect();
        Ok(Tensor {
            shape: y.shape.clone(),
            data,
        })
    }

    pub fn scale(&self, c: f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| v * c).collect(),
        }
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.require_same_shape(other, "add")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.require_same_shape(other, "sub")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a - b)
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &Tensor) -> Result<Tensor> {
        self.require_same_shape(other, "hadamard")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    /// Matrix product of two 2-D tensors. The inner accumulation runs over
    /// `k` in ascending order for every output element.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        self.require_rank2("matmul")?;
        other.require_rank2("matmul")?;
        let (n, k) = (self.shape[0], self.shape[1]);
        let (k2, m) = (other.shape[0], other.shape[1]);
        if k != k2 {
            return Err(CoreError::ShapeMismatch(format!(
                "matmul: inner dimensions {k} vs {k2}"
            )));
        }
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let a_row = &self.data[i * k..(i + 1) * k];
            let out_row = &mut out[i * m..(i + 1) * m];
            for (kk, &a) in a_row.iter().enumerate() {
                let b_row = &other.data[kk * m..(kk + 1) * m];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Tensor {
            shape: vec![n, m],
            data: out,
        })
    }

    pub fn transpose(&self) -> Result<Tensor> {
        self.require_rank2("transpose")?;
        let (n, m) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                out[j * n + i] = self.data[i * m + j];
            }
        }
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }

    /// Mean along `axis`. For a 1-D tensor only axis 0 is valid and the
    /// result has shape `[1]`; for a 2-D tensor axis 0 averages over rows
    /// (per-column result) and axis 1 over columns (per-row result).
    pub fn reduce_mean(&self, axis: usize) -> Result<Tensor> {
        self.reduce(axis, |slice| {
            let mut acc = 0.0;
            for &v in slice {
                acc += v;
            }
            acc / slice.len() as f64
        })
    }

    /// Population variance along `axis` (divides by the count, not count-1).
    pub fn reduce_var(&self, axis: usize) -> Result<Tensor> {
        self.reduce(axis, |slice| {
            let n = slice.len() as f64;
            let mut mean = 0.0;
            for &v in slice {
                mean += v;
            }
            mean /= n;
            let mut acc = 0.0;
            for &v in slice {
                let d = v - mean;
                acc += d * d;
            }
            acc / n
        })
    }

    fn reduce(&self, axis: usize, f: impl Fn(&[f64]) -> f64) -> Result<Tensor> {
        match self.shape.len() {
            1 => {
                if axis != 0 {
                    return Err(CoreError::InvalidArgument(format!(
                        "axis {axis} out of range for a 1-D tensor"
                    )));
                }
                Ok(Tensor {
                    shape: vec![1],
                    data: vec![f(&self.data)],
                })
            }
            2 => {
                let (n, m) = (self.shape[0], self.shape[1]);
                match axis {
                    0 => {
                        let mut out = Vec::with_capacity(m);
                        let mut column = vec![0.0; n];
                        for j in 0..m {
                            for i in 0..n {
                                column[i] = self.data[i * m + j];
                            }
                            out.push(f(&column));
                        }
                        Ok(Tensor {
                            shape: vec![m],
                            data: out,
                        })
                    }
                    1 => {
                        let out = (0..n).map(|i| f(&self.data[i * m..(i + 1) * m])).collect();
                        Ok(Tensor {
                            shape: vec![n],
                            data: out,
                        })
                    }
                    _ => Err(CoreError::InvalidArgument(format!(
                        "axis {axis} out of range for a 2-D tensor"
                    ))),
                }
            }
            r => Err(CoreError::InvalidArgument(format!(
                "reductions support rank 1 and 2, got rank {r}"
            ))),
        }
    }
}
