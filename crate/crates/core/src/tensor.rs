// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dense row-major `f64` tensors (vectors and matrices) and the handful of
//! kernels every other module is built from.
//!
//! A 1-D tensor of length `n` behaves as a `1 × n` row wherever a matrix is
//! expected. All reductions iterate in ascending index order, so results are
//! bit-identical across runs for identical inputs.

use std::fmt;

use crate::error::{Error, Result};

/// Probability floor used by [`kl_row`].
pub const KL_EPSILON: f64 = 1e-12;

/// Tolerance on row sums accepted by [`kl_row`].
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?} {:?}", self.shape, self.data)
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 2 {
            return Err(Error::InvalidShape {
                op: "Tensor::new",
                shape,
                reason: "only 1-D and 2-D tensors are supported",
            });
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeMismatch {
                op: "Tensor::new",
                left: shape,
                right: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::new(shape.to_vec(), vec![0.0; n]).expect("zeros: rank must be 1 or 2")
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let mut t = Self::zeros(shape);
        t.data.fill(value);
        t
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1, 1],
            data: vec![value],
        }
    }

    /// A `1 × n` row.
    pub fn row(values: Vec<f64>) -> Self {
        Self {
            shape: vec![1, values.len()],
            data: values,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::ShapeMismatch {
                    op: "from_rows",
                    left: vec![cols],
                    right: vec![r.len()],
                });
            }
            data.extend_from_slice(r);
        }
        Self::matrix(rows.len(), cols, data)
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
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

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(rows, cols)`, treating a 1-D tensor as a single row.
    pub fn dims(&self) -> (usize, usize) {
        match self.shape[..] {
            [n] => (1, n),
            [r, c] => (r, c),
            _ => unreachable!("rank checked at construction"),
        }
    }

    pub fn rows(&self) -> usize {
        self.dims().0
    }

    pub fn cols(&self) -> usize {
        self.dims().1
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let c = self.cols();
        self.data[i * c + j] = value;
    }

    pub fn row_slice(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    /// Copy of row `i` as a `1 × cols` tensor.
    pub fn row_tensor(&self, i: usize) -> Tensor {
        Tensor::row(self.row_slice(i).to_vec())
    }

    /// Same data viewed as a 2-D matrix.
    pub fn as_matrix(&self) -> Tensor {
        let (r, c) = self.dims();
        Tensor {
            shape: vec![r, c],
            data: self.data.clone(),
        }
    }

    pub fn transpose(&self) -> Tensor {
        let (r, c) = self.dims();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor {
            shape: vec![c, r],
            data: out,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.map(|x| c * x)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Sub-block `rows × cols` starting at `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Tensor {
        let mut data = Vec::with_capacity(rows * cols);
        for i in r0..r0 + rows {
            data.extend_from_slice(&self.row_slice(i)[c0..c0 + cols]);
        }
        Tensor {
            shape: vec![rows, cols],
            data,
        }
    }

    fn same_dims(&self, other: &Tensor) -> bool {
        self.dims() == other.dims()
    }
}

fn check_finite(t: Tensor, op: &'static str) -> Result<Tensor> {
    if t.is_finite() {
        Ok(t)
    } else {
        Err(Error::NonFinite(op))
    }
}

/// Matrix product. Each entry accumulates over the inner index in ascending
/// order.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims();
    let (k2, n) = b.dims();
    if k != k2 {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a.data[i * k + p];
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    check_finite(
        Tensor {
            shape: vec![m, n],
            data: out,
        },
        "matmul",
    )
}

/// Numerically stable softmax of each row.
pub fn row_softmax(a: &Tensor) -> Tensor {
    let (r, c) = a.dims();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        let row = a.row_slice(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        let mut total = 0.0;
        for &x in row {
            let e = (x - max).exp();
            total += e;
            out.push(e);
        }
        for v in &mut out[start..] {
            *v /= total;
        }
    }
    Tensor {
        shape: vec![r, c],
        data: out,
    }
}

/// Divide each row by its sum. Rows summing to zero become uniform.
pub fn row_normalize(a: &Tensor) -> Tensor {
    let (r, c) = a.dims();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        let row = a.row_slice(i);
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            out.extend(row.iter().map(|x| x / total));
        } else {
            out.extend(std::iter::repeat_n(1.0 / c as f64, c));
        }
    }
    Tensor {
        shape: vec![r, c],
        data: out,
    }
}

fn check_distribution(row: &[f64], index: usize) -> Result<()> {
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE || row.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::NotDistribution { row: index, sum });
    }
    Ok(())
}

/// Directed KL divergence `KL(p || q)` in nats between two probability
/// vectors, with both arguments floored by [`KL_EPSILON`].
pub fn kl_row(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::ShapeMismatch {
            op: "kl_row",
            left: vec![p.len()],
            right: vec![q.len()],
        });
    }
    check_distribution(p, 0)?;
    check_distribution(q, 1)?;
    Ok(kl_unchecked(p, q))
}

pub(crate) fn kl_unchecked(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&pi, &qi)| pi * ((pi + KL_EPSILON) / (qi + KL_EPSILON)).ln())
        .sum()
}

pub fn relu(a: &Tensor) -> Tensor {
    a.map(|x| x.max(0.0))
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if !a.same_dims(b) {
        return Err(Error::ShapeMismatch {
            op: "add",
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect();
    check_finite(
        Tensor {
            shape: a.shape.clone(),
            data,
        },
        "add",
    )
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if !a.same_dims(b) {
        return Err(Error::ShapeMismatch {
            op: "sub",
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect();
    Ok(Tensor {
        shape: a.shape.clone(),
        data,
    })
}

/// Horizontal concatenation, preserving argument order. All parts must
/// have the same number of rows; the result is 1-D when every part is.
pub fn concat_rows(parts: &[&Tensor]) -> Result<Tensor> {
    let Some(first) = parts.first() else {
        return Err(Error::InvalidShape {
            op: "concat_rows",
            shape: vec![],
            reason: "nothing to concatenate",
        });
    };
    let rows = first.rows();
    for p in parts {
        if p.rows() != rows {
            return Err(Error::ShapeMismatch {
                op: "concat_rows",
                left: first.shape.clone(),
                right: p.shape.clone(),
            });
        }
    }
    let cols: usize = parts.iter().map(|p| p.cols()).sum();
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for p in parts {
            data.extend_from_slice(p.row_slice(i));
        }
    }
    let shape = if parts.iter().all(|p| p.shape.len() == 1) {
        vec![cols]
    } else {
        vec![rows, cols]
    };
    Ok(Tensor { shape, data })
}

/// Mean of squared differences over all entries.
pub fn mse(a: &Tensor, b: &Tensor) -> Result<f64> {
    if !a.same_dims(b) {
        return Err(Error::ShapeMismatch {
            op: "mse",
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    let total: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum();
    let v = total / a.len() as f64;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite("mse"))
    }
}

/// Squared Euclidean distance.
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
