// SPDX-License-Identifier: MIT OR Apache-2.0

//! Tape-based reverse-mode differentiation over a closed set of tensor ops.
//!
//! Nodes are appended to a [`Graph`] as operations are recorded, so node
//! index order is already a topological order. [`Graph::backward`] walks the
//! tape once in reverse and returns the adjoint of every node that the
//! output depends on.
//!
//! ```
//! use syncomp::autodiff::Graph;
//! use syncomp::Tensor;
//!
//! let mut g = Graph::new();
//! let w = g.leaf(Tensor::row(vec![3.0]));
//! let t = g.constant(Tensor::row(vec![1.0]));
//! let loss = g.mse(w, t).unwrap();
//! let grads = g.backward(loss).unwrap();
//! // d/dw (w - 1)^2 = 2 (w - 1)
//! assert_eq!(grads.get(w).unwrap().data(), &[4.0]);
//! ```

use crate::error::{Error, Result};
use crate::tensor::{self, Tensor, KL_EPSILON};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Concat(Vec<Var>),
    Relu(Var),
    Transpose(Var),
    Scale(Var, f64),
    SumScalars(Vec<Var>),
    Mse(Var, Var),
    RowSoftmax(Var),
    /// Sum over rows of `KL(p_i || q_i)`.
    KlRows(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Adjoints indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Adjoint of `var`, or `None` when the output does not depend on it.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(|g| g.take())
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    /// A differentiable input (parameter or input tensor).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Same as [`leaf`](Self::leaf); callers simply never ask for its gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = tensor::matmul(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = tensor::add(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let v = tensor::concat_rows(&values)?;
        Ok(self.push(v, Op::Concat(parts.to_vec())))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = tensor::relu(self.value(a));
        self.push(v, Op::Relu(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).scale(c);
        self.push(v, Op::Scale(a, c))
    }

    /// Sum of scalar nodes, accumulated in argument order.
    pub fn sum_scalars(&mut self, parts: &[Var]) -> Result<Var> {
        let mut total = 0.0;
        for &p in parts {
            let v = self.value(p);
            if v.len() != 1 {
                return Err(Error::NonScalar(v.shape().to_vec()));
            }
            total += v.data()[0];
        }
        Ok(self.push(Tensor::scalar(total), Op::SumScalars(parts.to_vec())))
    }

    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = tensor::mse(self.value(a), self.value(b))?;
        Ok(self.push(Tensor::scalar(v), Op::Mse(a, b)))
    }

    pub fn row_softmax(&mut self, a: Var) -> Var {
        let v = tensor::row_softmax(self.value(a));
        self.push(v, Op::RowSoftmax(a))
    }

    /// `Σ_i KL(p_i || q_i)` over matching rows; with one row this is `kl_row`.
    pub fn kl_rows(&mut self, p: Var, q: Var) -> Result<Var> {
        let (pv, qv) = (self.value(p), self.value(q));
        if pv.dims() != qv.dims() {
            return Err(Error::ShapeMismatch {
                op: "kl_rows",
                left: pv.shape().to_vec(),
                right: qv.shape().to_vec(),
            });
        }
        let mut total = 0.0;
        for i in 0..pv.rows() {
            total += tensor::kl_row(pv.row_slice(i), qv.row_slice(i))?;
        }
        Ok(self.push(Tensor::scalar(total), Op::KlRows(p, q)))
    }

    /// Adjoints of every node with respect to the scalar `output`.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out = self.value(output);
        if out.len() != 1 {
            return Err(Error::NonScalar(out.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Tensor::new(out.shape().to_vec(), vec![1.0])?);

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let da = tensor::matmul(&g, &self.value(*b).transpose())?;
                    let db = tensor::matmul(&self.value(*a).transpose(), &g)?;
                    accumulate(&mut grads, *a, da, self.value(*a))?;
                    accumulate(&mut grads, *b, db, self.value(*b))?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone(), self.value(*a))?;
                    accumulate(&mut grads, *b, g.clone(), self.value(*b))?;
                }
                Op::Concat(parts) => {
                    let rows = g.rows();
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        let piece = g.as_matrix().block(0, offset, rows, w);
                        accumulate(&mut grads, p, piece, self.value(p))?;
                        offset += w;
                    }
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let data = g
                        .data()
                        .iter()
                        .zip(x.data())
                        .map(|(&gi, &xi)| if xi > 0.0 { gi } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *a, Tensor::new(x.shape().to_vec(), data)?, x)?;
                }
                Op::Transpose(a) => {
                    accumulate(&mut grads, *a, g.transpose(), self.value(*a))?;
                }
                Op::Scale(a, c) => {
                    accumulate(&mut grads, *a, g.scale(*c), self.value(*a))?;
                }
                Op::SumScalars(parts) => {
                    for &p in parts {
                        accumulate(&mut grads, p, g.clone(), self.value(p))?;
                    }
                }
                Op::Mse(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let coef = 2.0 * g.data()[0] / av.len() as f64;
                    let diff = tensor::sub(av, bv)?;
                    accumulate(&mut grads, *a, diff.scale(coef), av)?;
                    accumulate(&mut grads, *b, diff.scale(-coef), bv)?;
                }
                Op::RowSoftmax(a) => {
                    let y = &node.value;
                    let (r, c) = y.dims();
                    let mut data = Vec::with_capacity(r * c);
                    for i in 0..r {
                        let yr = y.row_slice(i);
                        let gr = g.row_slice(i);
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        data.extend(yr.iter().zip(gr).map(|(&yi, &gi)| yi * (gi - dot)));
                    }
                    let x = self.value(*a);
                    accumulate(&mut grads, *a, Tensor::new(x.shape().to_vec(), data)?, x)?;
                }
                Op::KlRows(p, q) => {
                    let (pv, qv) = (self.value(*p), self.value(*q));
                    let s = g.data()[0];
                    let mut dp = Vec::with_capacity(pv.len());
                    let mut dq = Vec::with_capacity(qv.len());
                    for (&pi, &qi) in pv.data().iter().zip(qv.data()) {
                        let (pe, qe) = (pi + KL_EPSILON, qi + KL_EPSILON);
                        dp.push(s * ((pe / qe).ln() + pi / pe));
                        dq.push(-s * pi / qe);
                    }
                    accumulate(&mut grads, *p, Tensor::new(pv.shape().to_vec(), dp)?, pv)?;
                    accumulate(&mut grads, *q, Tensor::new(qv.shape().to_vec(), dq)?, qv)?;
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], var: Var, g: Tensor, like: &Tensor) -> Result<()> {
    // Adjoints always carry the shape of the value they belong to.
    let g = if g.shape() == like.shape() {
        g
    } else {
        Tensor::new(like.shape().to_vec(), g.into_data())?
    };
    match &mut grads[var.0] {
        Some(existing) => *existing = tensor::add(existing, &g)?,
        slot => *slot = Some(g),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random(rng: &mut SplitMix64, r: usize, c: usize) -> Tensor {
        Tensor::matrix(r, c, (0..r * c).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
    }

    /// Central finite differences of `f` at `x`.
    fn numeric_grad(x: &Tensor, h: f64, f: impl Fn(&Tensor) -> f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut plus = x.clone();
                plus.data_mut()[i] += h;
                let mut minus = x.clone();
                minus.data_mut()[i] -= h;
                (f(&plus) - f(&minus)) / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if den < 1e-12 {
            num
        } else {
            num / den
        }
    }

    #[test]
    fn mse_relu_linear_matches_finite_differences() {
        let mut rng = SplitMix64::new(17);
        for _ in 0..50 {
            let w = random(&mut rng, 4, 3);
            let x = random(&mut rng, 1, 4);
            let t = random(&mut rng, 1, 3);
            let loss = |w: &Tensor| {
                let y = tensor::relu(&tensor::matmul(&x, w).unwrap());
                tensor::mse(&y, &t).unwrap()
            };
            let mut g = Graph::new();
            let (wv, xv, tv) = (g.leaf(w.clone()), g.constant(x.clone()), g.constant(t.clone()));
            let h = g.matmul(xv, wv).unwrap();
            let y = g.relu(h);
            let l = g.mse(y, tv).unwrap();
            let grads = g.backward(l).unwrap();
            let analytic = grads.get(wv).map(|t| t.data().to_vec()).unwrap_or(vec![0.0; 12]);
            let numeric = numeric_grad(&w, 1e-5, loss);
            assert!(rel_err(&analytic, &numeric) < 1e-4, "{analytic:?} vs {numeric:?}");
        }
    }

    #[test]
    fn softmax_kl_chain_matches_finite_differences() {
        let mut rng = SplitMix64::new(23);
        for _ in 0..50 {
            let a = random(&mut rng, 3, 4).scale(2.0);
            let b = random(&mut rng, 3, 4).scale(2.0);
            let f = |a: &Tensor| {
                let (p, q) = (tensor::row_softmax(a), tensor::row_softmax(&b));
                let mut s = 0.0;
                for i in 0..3 {
                    s += tensor::kl_row(p.row_slice(i), q.row_slice(i)).unwrap()
                        + tensor::kl_row(q.row_slice(i), p.row_slice(i)).unwrap();
                }
                s
            };
            let mut g = Graph::new();
            let (av, bv) = (g.leaf(a.clone()), g.constant(b.clone()));
            let (p, q) = (g.row_softmax(av), g.row_softmax(bv));
            let k1 = g.kl_rows(p, q).unwrap();
            let k2 = g.kl_rows(q, p).unwrap();
            let total = g.sum_scalars(&[k1, k2]).unwrap();
            assert!((g.value(total).data()[0] - f(&a)).abs() < 1e-12);
            let grads = g.backward(total).unwrap();
            let numeric = numeric_grad(&a, 1e-5, f);
            assert!(rel_err(grads.get(av).unwrap().data(), &numeric) < 1e-4);
        }
    }

    #[test]
    fn concat_transpose_scale_add_matches_finite_differences() {
        let mut rng = SplitMix64::new(29);
        for _ in 0..50 {
            let a = random(&mut rng, 2, 3);
            let b = random(&mut rng, 2, 2);
            let t = random(&mut rng, 5, 2);
            let f = |a: &Tensor| {
                let c = tensor::concat_rows(&[a, &b]).unwrap().transpose().scale(0.7);
                let d = tensor::add(&c, &t).unwrap();
                tensor::mse(&d, &Tensor::zeros(&[5, 2])).unwrap()
            };
            let mut g = Graph::new();
            let (av, bv, tv) = (g.leaf(a.clone()), g.constant(b.clone()), g.constant(t.clone()));
            let z = g.constant(Tensor::zeros(&[5, 2]));
            let c = g.concat_rows(&[av, bv]).unwrap();
            let ct = g.transpose(c);
            let cs = g.scale(ct, 0.7);
            let d = g.add(cs, tv).unwrap();
            let l = g.mse(d, z).unwrap();
            let grads = g.backward(l).unwrap();
            let numeric = numeric_grad(&a, 1e-5, f);
            assert!(rel_err(grads.get(av).unwrap().data(), &numeric) < 1e-4);
        }
    }

    #[test]
    fn constant_output_has_no_gradient() {
        let mut g = Graph::new();
        let w = g.leaf(Tensor::row(vec![1.0, 2.0]));
        let c = g.constant(Tensor::row(vec![3.0, 4.0]));
        let z = g.constant(Tensor::row(vec![0.0, 0.0]));
        let l = g.mse(c, z).unwrap();
        let grads = g.backward(l).unwrap();
        assert!(grads.get(w).is_none());
    }

    #[test]
    fn mse_gradient_vanishes_at_minimum() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::row(vec![0.3, -1.2, 5.0]));
        let t = g.constant(Tensor::row(vec![0.3, -1.2, 5.0]));
        let l = g.mse(x, t).unwrap();
        let grads = g.backward(l).unwrap();
        assert!(grads.get(x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shared_subexpression_accumulates() {
        // y = x·x summed through two uses of the same node.
        let mut g = Graph::new();
        let x = g.leaf(Tensor::row(vec![2.0]));
        let xt = g.transpose(x);
        let y = g.matmul(x, xt).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[4.0]);
    }

    #[test]
    fn non_scalar_output_is_rejected() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::row(vec![1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(Error::NonScalar(_))));
    }
}
