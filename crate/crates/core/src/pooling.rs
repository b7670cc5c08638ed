// SPDX-License-Identifier: MIT OR Apache-2.0

//! Sentence pooling strategies and the metrics used to compare them.
//!
//! [`syn_meanpool`] averages token vectors hierarchically along a parse:
//! every constituent is the unweighted mean of its children. Because the
//! mean is not associative, `((a b) c)` and `(a (b c))` pool to different
//! vectors, which is the structural signal flat [`meanpool`] throws away.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ptb::SyntaxTree;
use crate::tensor::Tensor;

/// Token vectors of one sentence plus an optional teacher sentence vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub id: String,
    pub tokens: Vec<String>,
    /// `T × D`, one row per token.
    pub token_embeddings: Tensor,
    /// `1 × D`.
    pub sentence_embedding: Option<Tensor>,
}

impl EmbeddingSet {
    pub fn new(
        id: impl Into<String>,
        tokens: Vec<String>,
        token_embeddings: Tensor,
        sentence_embedding: Option<Tensor>,
    ) -> Result<Self> {
        let id = id.into();
        let token_embeddings = token_embeddings.as_matrix();
        let (rows, dim) = token_embeddings.dims();
        if tokens.is_empty() || tokens.len() != rows {
            return Err(Error::TokenCountMismatch {
                id,
                tokens: tokens.len(),
                rows,
            });
        }
        let sentence_embedding = sentence_embedding.map(|s| s.as_matrix());
        if let Some(s) = &sentence_embedding {
            if s.dims() != (1, dim) {
                return Err(Error::ShapeMismatch {
                    op: "EmbeddingSet::new",
                    left: vec![1, dim],
                    right: s.shape().to_vec(),
                });
            }
        }
        Ok(Self {
            id,
            tokens,
            token_embeddings,
            sentence_embedding,
        })
    }

    pub fn dim(&self) -> usize {
        self.token_embeddings.cols()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolStrategy {
    Syn,
    Mean,
    First,
}

impl FromStr for PoolStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "syn" => Ok(Self::Syn),
            "mean" => Ok(Self::Mean),
            "first" => Ok(Self::First),
            other => Err(Error::Invalid(format!("unknown pooling strategy {other:?}"))),
        }
    }
}

impl fmt::Display for PoolStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Syn => "syn",
            Self::Mean => "mean",
            Self::First => "first",
        })
    }
}

/// How children are weighted at each constituent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ChildWeighting {
    /// Every child counts once.
    #[default]
    Unweighted,
    /// Children weighted by the number of tokens they span. Collapses to
    /// flat mean pooling; kept as a sanity check.
    TokenCount,
}

pub fn syn_meanpool(tree: &SyntaxTree, token_embeddings: &Tensor) -> Result<Tensor> {
    syn_meanpool_weighted(tree, token_embeddings, ChildWeighting::Unweighted)
}

pub fn syn_meanpool_weighted(
    tree: &SyntaxTree,
    token_embeddings: &Tensor,
    weighting: ChildWeighting,
) -> Result<Tensor> {
    let rows = token_embeddings.rows();
    let leaves = tree.leaf_count();
    if leaves != rows {
        return Err(Error::LeafCount { leaves, rows });
    }
    let mut next = 0;
    let (v, _) = pool_node(tree, token_embeddings, weighting, &mut next);
    Ok(Tensor::row(v))
}

fn pool_node(node: &SyntaxTree, emb: &Tensor, weighting: ChildWeighting, next: &mut usize) -> (Vec<f64>, usize) {
    if node.is_leaf() {
        let v = emb.row_slice(*next).to_vec();
        *next += 1;
        return (v, 1);
    }
    let parts: Vec<(Vec<f64>, usize)> = node
        .children()
        .iter()
        .map(|c| pool_node(c, emb, weighting, next))
        .collect();
    if parts.len() == 1 {
        return parts.into_iter().next().unwrap();
    }
    let span: usize = parts.iter().map(|(_, n)| n).sum();
    // Sum then divide once, so a flat tree reproduces `meanpool` bit for bit.
    let mut out = vec![0.0; emb.cols()];
    for (v, n) in &parts {
        let w = match weighting {
            ChildWeighting::Unweighted => 1.0,
            ChildWeighting::TokenCount => *n as f64,
        };
        for (o, x) in out.iter_mut().zip(v) {
            *o += w * x;
        }
    }
    let total = match weighting {
        ChildWeighting::Unweighted => parts.len(),
        ChildWeighting::TokenCount => span,
    } as f64;
    out.iter_mut().for_each(|o| *o /= total);
    (out, span)
}

pub fn meanpool(token_embeddings: &Tensor) -> Result<Tensor> {
    let (t, d) = token_embeddings.dims();
    if t == 0 {
        return Err(Error::InvalidShape {
            op: "meanpool",
            shape: token_embeddings.shape().to_vec(),
            reason: "no tokens",
        });
    }
    let mut out = vec![0.0; d];
    for i in 0..t {
        for (o, x) in out.iter_mut().zip(token_embeddings.row_slice(i)) {
            *o += x;
        }
    }
    Ok(Tensor::row(out.into_iter().map(|x| x / t as f64).collect()))
}

pub fn first_token_pool(set: &EmbeddingSet) -> Tensor {
    set.token_embeddings.row_tensor(0)
}

/// Pool `set` with `strategy`. Syntactic pooling needs the sentence's tree.
pub fn pool(strategy: PoolStrategy, set: &EmbeddingSet, tree: Option<&SyntaxTree>) -> Result<Tensor> {
    match strategy {
        PoolStrategy::Syn => {
            let tree = tree.ok_or_else(|| Error::Invalid(format!("syntactic pooling of {:?} needs a tree", set.id)))?;
            syn_meanpool(tree, &set.token_embeddings)
        }
        PoolStrategy::Mean => meanpool(&set.token_embeddings),
        PoolStrategy::First => Ok(first_token_pool(set)),
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            op: "euclidean",
            left: vec![a.len()],
            right: vec![b.len()],
        });
    }
    Ok(crate::tensor::sq_dist(a, b).sqrt())
}

/// Ranks starting at 1, tied values sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson correlation of average ranks).
/// Returns 0 when either side is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::ShapeMismatch {
            op: "spearman",
            left: vec![xs.len()],
            right: vec![ys.len()],
        });
    }
    if xs.len() < 2 {
        return Err(Error::InvalidShape {
            op: "spearman",
            shape: vec![xs.len()],
            reason: "needs at least two observations",
        });
    }
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Match scores for two captions against two images: `scores[c][i]` is the
/// score of caption `c` with image `i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairScores {
    pub scores: [[f64; 2]; 2],
}

impl PairScores {
    pub fn new(scores: [[f64; 2]; 2]) -> Self {
        Self { scores }
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        if t.dims() != (2, 2) {
            return Err(Error::ShapeMismatch {
                op: "PairScores::from_tensor",
                left: vec![2, 2],
                right: t.shape().to_vec(),
            });
        }
        Ok(Self::new([[t.get(0, 0), t.get(0, 1)], [t.get(1, 0), t.get(1, 1)]]))
    }

    pub fn text_correct(&self) -> bool {
        let s = &self.scores;
        s[0][0] > s[1][0] && s[1][1] > s[0][1]
    }

    pub fn image_correct(&self) -> bool {
        let s = &self.scores;
        s[0][0] > s[0][1] && s[1][1] > s[1][0]
    }

    pub fn group_correct(&self) -> bool {
        self.text_correct() && self.image_correct()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WinogroundScores {
    pub text: f64,
    pub image: f64,
    pub group: f64,
}

/// Percentages of pairs passing the text, image and group tests. Ties fail.
pub fn winoground_scores(pairs: &[PairScores]) -> Result<WinogroundScores> {
    if pairs.is_empty() {
        return Err(Error::Invalid("winoground scores need at least one pair".into()));
    }
    let n = pairs.len() as f64;
    let pct = |f: fn(&PairScores) -> bool| 100.0 * pairs.iter().filter(|p| f(p)).count() as f64 / n;
    Ok(WinogroundScores {
        text: pct(PairScores::text_correct),
        image: pct(PairScores::image_correct),
        group: pct(PairScores::group_correct),
    })
}
