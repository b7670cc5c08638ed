// SPDX-License-Identifier: MIT OR Apache-2.0

//! Cross-modal attention congruence.
//!
//! A layer's joint self-attention over `N_L` language and `N_V` vision
//! tokens is split into four blocks, language indices first:
//!
//! ```text
//!        L      V
//!   L  S_LL   S_LV
//!   V  S_VL   S_VV
//! ```
//!
//! The language-side loss projects the vision block into the language basis
//! through the cross-modal block, `S_LV · S_VV · S_LVᵀ`, row-normalizes both
//! it and `S_LL`, and compares them with the symmetric matrix KL ([`m_kl`]).
//! The vision side mirrors this with `S_VL · S_LL · S_VLᵀ` against `S_VV`.
//!
//! The projected matrix is exactly the "soft equivalence" matrix whose entry
//! `[i, j]` weights every intra-modal relation `(k, p)` of the other modality
//! by `cross[i, k] · cross[j, p]`. [`soft_equivalence_oracle`] builds it with
//! explicit loops; the closed form replaces `O(N²·M²)` work with two
//! matrix products.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionLayer {
    pub index: usize,
    pub ll: Tensor,
    pub lv: Tensor,
    pub vl: Tensor,
    pub vv: Tensor,
}

impl AttentionLayer {
    pub fn from_blocks(index: usize, ll: Tensor, lv: Tensor, vl: Tensor, vv: Tensor) -> Result<Self> {
        let (ll, lv, vl, vv) = (ll.as_matrix(), lv.as_matrix(), vl.as_matrix(), vv.as_matrix());
        let n_l = ll.rows();
        let n_v = vv.rows();
        let checks = [
            ("S_LL", ll.dims(), (n_l, n_l)),
            ("S_LV", lv.dims(), (n_l, n_v)),
            ("S_VL", vl.dims(), (n_v, n_l)),
            ("S_VV", vv.dims(), (n_v, n_v)),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(Error::BlockDims(format!(
                    "layer {index}: {name} is {}x{}, expected {}x{} for N_L={n_l}, N_V={n_v}",
                    got.0, got.1, want.0, want.1
                )));
            }
        }
        if n_l == 0 {
            return Err(Error::BlockDims(format!("layer {index}: no language tokens")));
        }
        Ok(Self { index, ll, lv, vl, vv })
    }

    /// Split a joint `(N_L + N_V)²` matrix, language indices first.
    pub fn from_full(index: usize, full: &Tensor, n_language: usize, n_vision: usize) -> Result<Self> {
        let n = n_language + n_vision;
        if full.dims() != (n, n) {
            return Err(Error::BlockDims(format!(
                "layer {index}: full matrix is {:?}, expected {n}x{n} for N_L={n_language}, N_V={n_vision}",
                full.shape()
            )));
        }
        let (l, v) = (n_language, n_vision);
        Self::from_blocks(
            index,
            full.block(0, 0, l, l),
            full.block(0, l, l, v),
            full.block(l, 0, v, l),
            full.block(l, l, v, v),
        )
    }

    pub fn n_language(&self) -> usize {
        self.ll.rows()
    }

    pub fn n_vision(&self) -> usize {
        self.vv.rows()
    }

    /// Reassemble the joint matrix.
    pub fn full(&self) -> Tensor {
        let (l, v) = (self.n_language(), self.n_vision());
        let n = l + v;
        let mut out = Tensor::zeros(&[n, n]);
        let place = |out: &mut Tensor, block: &Tensor, r0: usize, c0: usize| {
            for i in 0..block.rows() {
                for j in 0..block.cols() {
                    out.set(r0 + i, c0 + j, block.get(i, j));
                }
            }
        };
        place(&mut out, &self.ll, 0, 0);
        place(&mut out, &self.lv, 0, l);
        place(&mut out, &self.vl, l, 0);
        place(&mut out, &self.vv, l, l);
        out
    }

    /// The same layer with the roles of language and vision exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            index: self.index,
            ll: self.vv.clone(),
            lv: self.vl.clone(),
            vl: self.lv.clone(),
            vv: self.ll.clone(),
        }
    }

    /// `(cross, other_intra, own_intra)` for `side`.
    fn side_blocks(&self, side: Side) -> (&Tensor, &Tensor, &Tensor) {
        match side {
            Side::Language => (&self.lv, &self.vv, &self.ll),
            Side::Vision => (&self.vl, &self.ll, &self.vv),
        }
    }

    fn require_vision(&self) -> Result<()> {
        if self.n_vision() == 0 {
            Err(Error::NoVision)
        } else {
            Ok(())
        }
    }
}

/// Per-layer attention for one example.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionBundle {
    pub id: String,
    pub n_language: usize,
    pub n_vision: usize,
    pub layers: Vec<AttentionLayer>,
    /// Rows were already softmax-normalized upstream.
    pub normalized: bool,
    pub tokens: Option<Vec<String>>,
}

impl AttentionBundle {
    pub fn normalization(&self) -> Normalization {
        if self.normalized {
            Normalization::Renormalize
        } else {
            Normalization::Softmax
        }
    }

    pub fn select(&self, selector: LayerSelector) -> Result<Vec<&AttentionLayer>> {
        match selector {
            LayerSelector::Last => self
                .layers
                .last()
                .map(|l| vec![l])
                .ok_or_else(|| Error::BlockDims(format!("bundle {:?} has no layers", self.id))),
            LayerSelector::Index(i) => self.layers.get(i).map(|l| vec![l]).ok_or_else(|| {
                Error::BlockDims(format!(
                    "bundle {:?} has {} layers, no layer {i}",
                    self.id,
                    self.layers.len()
                ))
            }),
            LayerSelector::All => Ok(self.layers.iter().collect()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Language,
    Vision,
}

/// Row normalization applied to both arguments of [`m_kl`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Normalization {
    /// Scores are raw `QKᵀ` logits.
    #[default]
    Softmax,
    /// Scores are already probabilities; only rescale rows to sum to one.
    Renormalize,
}

impl Normalization {
    pub fn apply(self, t: &Tensor) -> Tensor {
        match self {
            Normalization::Softmax => tensor::row_softmax(t),
            Normalization::Renormalize => tensor::row_normalize(t),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum LayerSelector {
    #[default]
    Last,
    Index(usize),
    All,
}

impl FromStr for LayerSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "last" => Ok(Self::Last),
            "all" => Ok(Self::All),
            n => n
                .parse()
                .map(Self::Index)
                .map_err(|_| Error::Invalid(format!("layer selector must be last, all or an index, got {n:?}"))),
        }
    }
}

impl fmt::Display for LayerSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Last => f.write_str("last"),
            Self::All => f.write_str("all"),
            Self::Index(i) => write!(f, "{i}"),
        }
    }
}

/// Cross-modal projection `cross · other · crossᵀ`.
pub fn project(layer: &AttentionLayer, side: Side) -> Result<Tensor> {
    layer.require_vision()?;
    let (cross, other, _) = layer.side_blocks(side);
    tensor::matmul(&tensor::matmul(cross, other)?, &cross.transpose())
}

/// Symmetric matrix KL: `Σ_i KL(a_i || b_i) + KL(b_i || a_i)`.
pub fn m_kl(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::ShapeMismatch {
            op: "m_kl",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let mut total = 0.0;
    for i in 0..a.rows() {
        let (ai, bi) = (a.row_slice(i), b.row_slice(i));
        total += tensor::kl_row(ai, bi).map_err(|e| relabel_row(e, i))?;
        total += tensor::kl_row(bi, ai).map_err(|e| relabel_row(e, i))?;
    }
    Ok(total)
}

fn relabel_row(e: Error, row: usize) -> Error {
    match e {
        Error::NotDistribution { sum, .. } => Error::NotDistribution { row, sum },
        other => other,
    }
}

pub fn cacr_side(layer: &AttentionLayer, side: Side, norm: Normalization) -> Result<f64> {
    let projected = project(layer, side)?;
    let (_, _, own) = layer.side_blocks(side);
    m_kl(&norm.apply(&projected), &norm.apply(own))
}

pub fn cacr_l(layer: &AttentionLayer) -> Result<f64> {
    cacr_side(layer, Side::Language, Normalization::Softmax)
}

pub fn cacr_v(layer: &AttentionLayer) -> Result<f64> {
    cacr_side(layer, Side::Vision, Normalization::Softmax)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacrResult {
    pub layer: usize,
    pub loss_l: f64,
    pub loss_v: f64,
    pub total: f64,
    /// `S_LV · S_VV · S_LVᵀ` before normalization.
    pub projected_l: Tensor,
    /// `S_VL · S_LL · S_VLᵀ` before normalization.
    pub projected_v: Tensor,
}

pub fn cacr_layer(layer: &AttentionLayer, norm: Normalization) -> Result<CacrResult> {
    let projected_l = project(layer, Side::Language)?;
    let projected_v = project(layer, Side::Vision)?;
    let loss_l = m_kl(&norm.apply(&projected_l), &norm.apply(&layer.ll))?;
    let loss_v = m_kl(&norm.apply(&projected_v), &norm.apply(&layer.vv))?;
    Ok(CacrResult {
        layer: layer.index,
        loss_l,
        loss_v,
        total: loss_l + loss_v,
        projected_l,
        projected_v,
    })
}

/// Loss of the selected layer (the last one by default). For
/// [`LayerSelector::All`] the per-layer losses are summed.
pub fn cacr_total(bundle: &AttentionBundle, selector: LayerSelector) -> Result<CacrResult> {
    let norm = bundle.normalization();
    let layers = bundle.select(selector)?;
    let mut results = layers.into_iter().map(|l| cacr_layer(l, norm));
    let mut acc = results.next().expect("select returns at least one layer")?;
    for r in results {
        let r = r?;
        acc.loss_l += r.loss_l;
        acc.loss_v += r.loss_v;
        acc.total = acc.loss_l + acc.loss_v;
    }
    Ok(acc)
}

/// Differentiable total loss over the four blocks of one layer, with
/// softmax normalization.
pub fn cacr_graph(g: &mut Graph, ll: Var, lv: Var, vl: Var, vv: Var) -> Result<Var> {
    let side = |g: &mut Graph, cross: Var, other: Var, own: Var| -> Result<Var> {
        let cross_t = g.transpose(cross);
        let left = g.matmul(cross, other)?;
        let projected = g.matmul(left, cross_t)?;
        let p = g.row_softmax(projected);
        let q = g.row_softmax(own);
        let forward = g.kl_rows(p, q)?;
        let backward = g.kl_rows(q, p)?;
        g.sum_scalars(&[forward, backward])
    };
    let loss_l = side(g, lv, vv, ll)?;
    let loss_v = side(g, vl, ll, vv)?;
    g.sum_scalars(&[loss_l, loss_v])
}

/// How the oracle reduces the weighted relation matrix for each entry.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum OracleReduction {
    /// Plain sum; equals the closed-form projection.
    #[default]
    Sum,
    /// Sum divided by the number of weighted relations (`other` is
    /// `M × M`, so by `M²`). A uniform rescaling of the logits.
    Mean,
}

/// Entry-by-entry soft equivalence matrix.
///
/// For each target pair `(i, j)` the weighting matrix `W[k, p] =
/// cross[i, k] · cross[j, p]` (outer product of rows `i` and `j` of the
/// cross-modal block) is multiplied element-wise with the other modality's
/// intra-modal block and reduced.
pub fn soft_equivalence_oracle(layer: &AttentionLayer, side: Side, reduction: OracleReduction) -> Result<Tensor> {
    layer.require_vision()?;
    let (cross, other, _) = layer.side_blocks(side);
    let n = cross.rows();
    let m = cross.cols();
    let mut out = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..m {
                for p in 0..m {
                    let weight = cross.get(i, k) * cross.get(j, p);
                    acc += weight * other.get(k, p);
                }
            }
            if reduction == OracleReduction::Mean {
                acc /= (m * m) as f64;
            }
            out.set(i, j, acc);
        }
    }
    Ok(out)
}

/// Multiply-add counts `(closed_form, oracle)` for one side.
pub fn operation_counts(layer: &AttentionLayer, side: Side) -> (u64, u64) {
    let (cross, _, _) = layer.side_blocks(side);
    let n = cross.rows() as u64;
    let m = cross.cols() as u64;
    // (n×m)(m×m) then (n×m)(m×n)
    let closed = n * m * m + n * m * n;
    let oracle = n * n * m * m * 2;
    (closed, oracle)
}

/// Index of the row maximum; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

/// One-hot counterpart matrix `T[i, j] = other[i*, j*]` where `i*` is the
/// argmax of row `i` of the cross-modal block.
pub fn hard_equivalence_matrix(layer: &AttentionLayer, side: Side) -> Result<Tensor> {
    layer.require_vision()?;
    let (cross, other, _) = layer.side_blocks(side);
    let n = cross.rows();
    let star: Vec<usize> = (0..n).map(|i| argmax(cross.row_slice(i))).collect();
    let mut out = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in 0..n {
            out.set(i, j, other.get(star[i], star[j]));
        }
    }
    Ok(out)
}

pub fn hard_equivalence_loss(layer: &AttentionLayer, side: Side, norm: Normalization) -> Result<f64> {
    let target = hard_equivalence_matrix(layer, side)?;
    let (_, _, own) = layer.side_blocks(side);
    m_kl(&norm.apply(&target), &norm.apply(own))
}

/// Shannon entropy in bits of the distribution of per-row argmax columns.
pub fn argmax_entropy(cross_block: &Tensor) -> Result<f64> {
    let (m, n) = cross_block.dims();
    if m == 0 || n == 0 {
        return Err(Error::InvalidShape {
            op: "argmax_entropy",
            shape: cross_block.shape().to_vec(),
            reason: "needs at least one row and one column",
        });
    }
    let mut counts = vec![0usize; n];
    for i in 0..m {
        counts[argmax(cross_block.row_slice(i))] += 1;
    }
    let h = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / m as f64;
            -p * p.log2()
        })
        .sum::<f64>();
    // -0.0 when every row agrees
    Ok(h.abs())
}

/// Every quantity reported per example by the `cacr` command.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CacrRecord {
    pub id: String,
    pub layer: usize,
    pub loss_l: f64,
    pub loss_v: f64,
    pub total: f64,
    pub hard_l: f64,
    pub hard_v: f64,
    pub entropy_lv: f64,
    pub entropy_vl: f64,
}

pub fn cacr_record(id: &str, layer: &AttentionLayer, norm: Normalization) -> Result<CacrRecord> {
    let r = cacr_layer(layer, norm)?;
    Ok(CacrRecord {
        id: id.to_string(),
        layer: layer.index,
        loss_l: r.loss_l,
        loss_v: r.loss_v,
        total: r.total,
        hard_l: hard_equivalence_loss(layer, Side::Language, norm)?,
        hard_v: hard_equivalence_loss(layer, Side::Vision, norm)?,
        entropy_lv: argmax_entropy(&layer.lv)?,
        entropy_vl: argmax_entropy(&layer.vl)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random(rng: &mut SplitMix64, r: usize, c: usize) -> Tensor {
        Tensor::matrix(r, c, (0..r * c).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
    }

    fn random_layer(rng: &mut SplitMix64, n_l: usize, n_v: usize) -> AttentionLayer {
        AttentionLayer::from_blocks(
            0,
            random(rng, n_l, n_l),
            random(rng, n_l, n_v),
            random(rng, n_v, n_l),
            random(rng, n_v, n_v),
        )
        .unwrap()
    }

    fn permutation(perm: &[usize]) -> Tensor {
        let n = perm.len();
        let mut p = Tensor::zeros(&[n, n]);
        for (i, &j) in perm.iter().enumerate() {
            p.set(i, j, 1.0);
        }
        p
    }

    fn congruent_layer(rng: &mut SplitMix64, perm: &[usize]) -> AttentionLayer {
        let n = perm.len();
        let p = permutation(perm);
        let ll = random(rng, n, n);
        let vv = tensor::matmul(&tensor::matmul(&p.transpose(), &ll).unwrap(), &p).unwrap();
        AttentionLayer::from_blocks(0, ll, p.clone(), p.transpose(), vv).unwrap()
    }

    #[test]
    fn split_full_matrix() {
        let full = Tensor::matrix(5, 5, (0..25).map(f64::from).collect()).unwrap();
        let layer = AttentionLayer::from_full(0, &full, 2, 3).unwrap();
        assert_eq!(layer.ll.shape(), &[2, 2]);
        assert_eq!(layer.lv.shape(), &[2, 3]);
        assert_eq!(layer.vl.shape(), &[3, 2]);
        assert_eq!(layer.vv.shape(), &[3, 3]);
        assert_eq!(layer.lv.data(), &[2.0, 3.0, 4.0, 7.0, 8.0, 9.0]);
        assert_eq!(layer.vl.data(), &[10.0, 11.0, 15.0, 16.0, 20.0, 21.0]);
        assert_eq!(layer.full(), full);
    }

    #[test]
    fn language_only_layer() {
        let full = Tensor::eye(3);
        let layer = AttentionLayer::from_full(0, &full, 3, 0).unwrap();
        assert_eq!(layer.lv.shape(), &[3, 0]);
        assert!(layer.vv.is_empty());
        assert!(matches!(cacr_l(&layer), Err(Error::NoVision)));
        assert!(matches!(
            hard_equivalence_loss(&layer, Side::Vision, Normalization::Softmax),
            Err(Error::NoVision)
        ));
    }

    #[test]
    fn block_dimension_errors() {
        let err = AttentionLayer::from_blocks(
            0,
            Tensor::zeros(&[2, 2]),
            Tensor::zeros(&[2, 3]),
            Tensor::zeros(&[2, 2]),
            Tensor::zeros(&[3, 3]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::BlockDims(_)));
        assert!(AttentionLayer::from_full(0, &Tensor::zeros(&[4, 4]), 2, 3).is_err());
    }

    #[test]
    fn uniform_blocks_give_zero() {
        let c = 0.37;
        let layer = AttentionLayer::from_blocks(
            0,
            Tensor::full(&[2, 2], c),
            Tensor::full(&[2, 3], c),
            Tensor::full(&[3, 2], c),
            Tensor::full(&[3, 3], c),
        )
        .unwrap();
        assert_eq!(cacr_l(&layer).unwrap(), 0.0);
        assert_eq!(cacr_v(&layer).unwrap(), 0.0);
    }

    #[test]
    fn permutation_congruence_gives_zero() {
        let mut rng = SplitMix64::new(4);
        let layer = congruent_layer(&mut rng, &[2, 0, 3, 1]);
        assert_eq!(project(&layer, Side::Language).unwrap(), layer.ll);
        assert_eq!(cacr_l(&layer).unwrap(), 0.0);
        assert_eq!(cacr_v(&layer).unwrap(), 0.0);
        assert_eq!(
            hard_equivalence_loss(&layer, Side::Language, Normalization::Softmax).unwrap(),
            0.0
        );
    }

    #[test]
    fn hand_computed_two_by_two() {
        let layer = AttentionLayer::from_blocks(
            0,
            Tensor::eye(2),
            Tensor::full(&[2, 2], 0.5),
            Tensor::full(&[2, 2], 0.5),
            Tensor::eye(2),
        )
        .unwrap();
        let projected = project(&layer, Side::Language).unwrap();
        assert_eq!(projected.data(), &[0.5; 4]);
        // Two rows, each KL(s||u) + KL(u||s) with s = softmax([1, 0]).
        let e = std::f64::consts::E;
        let s = [e / (e + 1.0), 1.0 / (e + 1.0)];
        let kl = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(a, b)| a * (a / b).ln()).sum::<f64>();
        let expected = 2.0 * (kl(&s, &[0.5, 0.5]) + kl(&[0.5, 0.5], &s));
        let got = cacr_l(&layer).unwrap();
        assert!((got - expected).abs() < 1e-10);
        assert!((got - 0.46211715726000985).abs() < 1e-10);
        let m = m_kl(&tensor::row_softmax(&projected), &tensor::row_softmax(&layer.ll)).unwrap();
        assert_eq!(m, got);
    }

    #[test]
    fn m_kl_properties() {
        let mut rng = SplitMix64::new(12);
        let a = tensor::row_softmax(&random(&mut rng, 3, 3));
        let b = tensor::row_softmax(&random(&mut rng, 3, 3));
        assert_eq!(m_kl(&a, &a).unwrap(), 0.0);
        assert_eq!(m_kl(&a, &b).unwrap(), m_kl(&b, &a).unwrap());
        assert!(m_kl(&a, &Tensor::zeros(&[2, 3])).is_err());
        assert!(matches!(
            m_kl(&Tensor::full(&[2, 2], 0.9), &a.block(0, 0, 2, 2)),
            Err(Error::NotDistribution { row: 0, .. })
        ));
    }

    #[test]
    fn vision_side_is_language_side_of_swapped_layer() {
        let mut rng = SplitMix64::new(6);
        for _ in 0..20 {
            let layer = random_layer(&mut rng, 3, 4);
            assert_eq!(cacr_v(&layer).unwrap(), cacr_l(&layer.swapped()).unwrap());
        }
    }

    #[test]
    fn oracle_matches_closed_form() {
        let mut rng = SplitMix64::new(7);
        for _ in 0..100 {
            let n_l = 1 + rng.below(8);
            let n_v = 1 + rng.below(8);
            let layer = random_layer(&mut rng, n_l, n_v);
            for side in [Side::Language, Side::Vision] {
                let closed = project(&layer, side).unwrap();
                let oracle = soft_equivalence_oracle(&layer, side, OracleReduction::Sum).unwrap();
                for (a, b) in closed.data().iter().zip(oracle.data()) {
                    assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn oracle_on_random_three_by_four_gives_same_loss() {
        let mut rng = SplitMix64::new(34);
        let layer = random_layer(&mut rng, 3, 4);
        let oracle = soft_equivalence_oracle(&layer, Side::Vision, OracleReduction::Sum).unwrap();
        let via_oracle = m_kl(&tensor::row_softmax(&oracle), &tensor::row_softmax(&layer.vv)).unwrap();
        assert!((via_oracle - cacr_v(&layer).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn oracle_scalar_and_zero_cases() {
        let layer = AttentionLayer::from_blocks(
            0,
            Tensor::scalar(3.0),
            Tensor::scalar(0.5),
            Tensor::scalar(-2.0),
            Tensor::scalar(7.0),
        )
        .unwrap();
        let v = soft_equivalence_oracle(&layer, Side::Vision, OracleReduction::Sum).unwrap();
        assert_eq!(v.data(), &[(-2.0f64).powi(2) * 3.0]);
        let mut rng = SplitMix64::new(1);
        let mut zero = random_layer(&mut rng, 3, 2);
        zero.vl = Tensor::zeros(&[2, 3]);
        let v = soft_equivalence_oracle(&zero, Side::Vision, OracleReduction::Sum).unwrap();
        assert!(v.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn mean_reduction_is_uniform_rescale() {
        let mut rng = SplitMix64::new(13);
        let layer = random_layer(&mut rng, 3, 5);
        let sum = soft_equivalence_oracle(&layer, Side::Language, OracleReduction::Sum).unwrap();
        let mean = soft_equivalence_oracle(&layer, Side::Language, OracleReduction::Mean).unwrap();
        for (s, m) in sum.data().iter().zip(mean.data()) {
            assert!((s / 25.0 - m).abs() < 1e-12);
        }
    }

    #[test]
    fn hard_equals_soft_for_one_hot_cross_blocks() {
        let mut rng = SplitMix64::new(21);
        for _ in 0..20 {
            let (n_l, n_v) = (1 + rng.below(6), 1 + rng.below(6));
            let mut layer = random_layer(&mut rng, n_l, n_v);
            let mut lv = Tensor::zeros(&[n_l, n_v]);
            for i in 0..n_l {
                lv.set(i, rng.below(n_v), 1.0);
            }
            let mut vl = Tensor::zeros(&[n_v, n_l]);
            for i in 0..n_v {
                vl.set(i, rng.below(n_l), 1.0);
            }
            layer.lv = lv;
            layer.vl = vl;
            for side in [Side::Language, Side::Vision] {
                assert_eq!(
                    hard_equivalence_matrix(&layer, side).unwrap(),
                    project(&layer, side).unwrap()
                );
                let hard = hard_equivalence_loss(&layer, side, Normalization::Softmax).unwrap();
                let soft = cacr_side(&layer, side, Normalization::Softmax).unwrap();
                assert!((hard - soft).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn argmax_collapse_repeats_one_row() {
        let mut rng = SplitMix64::new(2);
        let mut layer = random_layer(&mut rng, 3, 3);
        layer.lv = Tensor::from_rows(&[[0.0, 5.0, 1.0], [0.0, 2.0, 1.0], [1.0, 9.0, 1.0]]).unwrap();
        let t = hard_equivalence_matrix(&layer, Side::Language).unwrap();
        let v = layer.vv.get(1, 1);
        assert!(t.data().iter().all(|&x| x == v));
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0]), 0);
    }

    #[test]
    fn hard_loss_is_brittle_near_ties() {
        // Row 0 of S_LV has its two largest weights within 1%; a 1%
        // perturbation flips the argmax.
        let ll = Tensor::from_rows(&[[2.0, 0.0, -1.0], [0.5, 1.0, 0.0], [-1.0, 0.0, 2.0]]).unwrap();
        let vv = Tensor::from_rows(&[[3.0, -2.0, 0.0], [-2.0, 3.0, 1.0], [0.0, 1.0, 3.0]]).unwrap();
        let lv = Tensor::from_rows(&[[1.0, 0.995, 0.1], [0.1, 1.0, 0.2], [0.1, 0.2, 1.0]]).unwrap();
        let vl = lv.transpose();
        let base = AttentionLayer::from_blocks(0, ll, lv.clone(), vl.clone(), vv).unwrap();
        let delta = 0.01;
        let mut bumped = base.clone();
        bumped.lv.set(0, 1, lv.get(0, 1) + delta);
        let norm = Normalization::Softmax;
        let hard_jump = (hard_equivalence_loss(&bumped, Side::Language, norm).unwrap()
            - hard_equivalence_loss(&base, Side::Language, norm).unwrap())
        .abs();
        let soft_jump = (cacr_l(&bumped).unwrap() - cacr_l(&base).unwrap()).abs();
        assert!(hard_jump > 10.0 * delta, "hard jump {hard_jump}");
        assert!(hard_jump > 10.0 * soft_jump, "hard {hard_jump} soft {soft_jump}");
        let gap = (hard_equivalence_loss(&base, Side::Language, norm).unwrap() - cacr_l(&base).unwrap()).abs();
        assert!(gap > 10.0 * delta, "gap {gap}");
    }

    #[test]
    fn entropy_examples() {
        let same = Tensor::from_rows(&[[0.0, 1.0], [0.2, 0.9], [0.0, 3.0]]).unwrap();
        assert_eq!(argmax_entropy(&same).unwrap(), 0.0);
        let distinct = Tensor::eye(4);
        assert!((argmax_entropy(&distinct).unwrap() - 2.0).abs() < 1e-15);
        let mut rng = SplitMix64::new(5);
        let block = random(&mut rng, 6, 4);
        let mut rows: Vec<Vec<f64>> = (0..6).map(|i| block.row_slice(i).to_vec()).collect();
        rows.reverse();
        rows.swap(0, 3);
        let permuted = Tensor::from_rows(&rows).unwrap();
        assert_eq!(argmax_entropy(&block).unwrap(), argmax_entropy(&permuted).unwrap());
        assert!(argmax_entropy(&Tensor::zeros(&[0, 3])).is_err());
    }

    #[test]
    fn total_is_sum_of_sides_and_selects_last_layer() {
        let mut rng = SplitMix64::new(30);
        let layers: Vec<AttentionLayer> = (0..3)
            .map(|i| {
                let mut l = random_layer(&mut rng, 3, 2);
                l.index = i;
                l
            })
            .collect();
        let bundle = AttentionBundle {
            id: "b".into(),
            n_language: 3,
            n_vision: 2,
            layers: layers.clone(),
            normalized: false,
            tokens: None,
        };
        let r = cacr_total(&bundle, LayerSelector::Last).unwrap();
        assert_eq!(r.layer, 2);
        assert_eq!(r.total, cacr_l(&layers[2]).unwrap() + cacr_v(&layers[2]).unwrap());
        let first = cacr_total(&bundle, LayerSelector::Index(0)).unwrap();
        assert_eq!(first.loss_l, cacr_l(&layers[0]).unwrap());
        let all = cacr_total(&bundle, LayerSelector::All).unwrap();
        let expected: f64 = layers.iter().map(|l| cacr_l(l).unwrap() + cacr_v(l).unwrap()).sum();
        assert!((all.total - expected).abs() < 1e-12);
        assert!(cacr_total(&bundle, LayerSelector::Index(3)).is_err());
    }

    #[test]
    fn graph_value_matches_direct() {
        let mut rng = SplitMix64::new(31);
        let layer = random_layer(&mut rng, 4, 3);
        let mut g = Graph::new();
        let ll = g.leaf(layer.ll.clone());
        let lv = g.leaf(layer.lv.clone());
        let vl = g.leaf(layer.vl.clone());
        let vv = g.leaf(layer.vv.clone());
        let total = cacr_graph(&mut g, ll, lv, vl, vv).unwrap();
        let direct = cacr_layer(&layer, Normalization::Softmax).unwrap().total;
        assert!((g.value(total).data()[0] - direct).abs() < 1e-12);
    }

    #[test]
    fn renormalize_mode_on_probability_blocks() {
        let full =
            tensor::row_softmax(&Tensor::from_rows(&[[1.0, 0.0, 2.0], [0.0, 1.0, 0.0], [2.0, 0.5, 1.0]]).unwrap());
        let layer = AttentionLayer::from_full(0, &full, 2, 1).unwrap();
        let r = cacr_layer(&layer, Normalization::Renormalize).unwrap();
        assert!(r.total >= 0.0 && r.total.is_finite());
        // With one vision token the vision side compares two 1x1 rows.
        assert_eq!(r.loss_v, 0.0);
    }

    #[test]
    fn operation_counts_scale_as_expected() {
        let mut rng = SplitMix64::new(1);
        let layer = random_layer(&mut rng, 8, 8);
        let (closed, oracle) = operation_counts(&layer, Side::Language);
        assert_eq!(closed, 8 * 8 * 8 * 2);
        assert_eq!(oracle, 8u64.pow(4) * 2);
    }

    #[test]
    fn selector_parsing() {
        assert_eq!("last".parse::<LayerSelector>().unwrap(), LayerSelector::Last);
        assert_eq!("4".parse::<LayerSelector>().unwrap(), LayerSelector::Index(4));
        assert!("x".parse::<LayerSelector>().is_err());
    }
}
