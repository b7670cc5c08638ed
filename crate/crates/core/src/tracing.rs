// SPDX-License-Identifier: MIT OR Apache-2.0

//! Causal tracing over module-net composition.
//!
//! Three kinds of forward pass are compared. The clean run uses the given
//! token embeddings. The corrupted run adds Gaussian noise to selected
//! leaves. A patched run is the corrupted run with one node's output
//! overwritten by its clean value. A node's restoration score is
//!
//! ```text
//! 1 − ‖root_patched − root_clean‖² / ‖root_corrupted − root_clean‖²
//! ```
//!
//! so 1 means patching that node alone undoes the corruption and 0 means it
//! changes nothing.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ptb::SyntaxTree;
use crate::rng::SplitMix64;
use crate::synnamon::ModuleNet;
use crate::tensor::{self, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "value")]
pub enum NoiseScale {
    /// Multiple of the population standard deviation of each corrupted
    /// leaf's own embedding entries.
    Relative(f64),
    /// Fixed standard deviation.
    Absolute(f64),
}

impl Default for NoiseScale {
    fn default() -> Self {
        NoiseScale::Relative(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    pub corrupt_leaves: BTreeSet<usize>,
    pub noise: NoiseScale,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeScore {
    /// Pre-order position; the root is 0.
    pub node: usize,
    pub label: String,
    pub first_leaf: usize,
    pub leaf_count: usize,
    pub covers_corruption: bool,
    pub restoration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    pub tree: String,
    pub corrupt_leaves: Vec<usize>,
    pub noise: NoiseScale,
    /// Noise standard deviation actually applied to each corrupted leaf.
    pub noise_sigmas: Vec<f64>,
    pub seed: u64,
    pub d_clean: f64,
    pub d_corrupted: f64,
    pub nodes: Vec<NodeScore>,
}

impl TraceReport {
    pub fn score(&self, node: usize) -> f64 {
        self.nodes[node].restoration
    }
}

/// `(label, first_leaf, leaf_count)` of every node in pre-order.
pub fn node_spans(tree: &SyntaxTree) -> Vec<(String, usize, usize)> {
    fn walk(t: &SyntaxTree, next_leaf: &mut usize, out: &mut Vec<(String, usize, usize)>) {
        let at = out.len();
        out.push((t.label().to_string(), *next_leaf, 0));
        if t.is_leaf() {
            *next_leaf += 1;
        } else {
            for c in t.children() {
                walk(c, next_leaf, out);
            }
        }
        out[at].2 = *next_leaf - out[at].1;
    }
    let mut out = Vec::with_capacity(tree.node_count());
    walk(tree, &mut 0, &mut out);
    out
}

fn population_sd(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// Token embeddings with noise added to the corrupted rows, and the
/// standard deviation used for each.
pub fn corrupt(tokens: &Tensor, config: &TraceConfig) -> Result<(Tensor, Vec<f64>)> {
    if config.corrupt_leaves.is_empty() {
        return Err(Error::EmptyCorruption);
    }
    let leaves = tokens.rows();
    if let Some(&bad) = config.corrupt_leaves.iter().find(|&&i| i >= leaves) {
        return Err(Error::LeafIndex { index: bad, leaves });
    }
    let mut rng = SplitMix64::keyed(config.seed, "trace-noise");
    let mut out = tokens.as_matrix();
    let mut sigmas = Vec::with_capacity(config.corrupt_leaves.len());
    for &leaf in &config.corrupt_leaves {
        let sigma = match config.noise {
            NoiseScale::Relative(c) => c * population_sd(tokens.row_slice(leaf)),
            NoiseScale::Absolute(s) => s,
        };
        for j in 0..out.cols() {
            let v = out.get(leaf, j) + sigma * rng.normal();
            out.set(leaf, j, v);
        }
        sigmas.push(sigma);
    }
    Ok((out, sigmas))
}

pub fn trace(net: &ModuleNet, tree: &SyntaxTree, tokens: &Tensor, config: &TraceConfig) -> Result<TraceReport> {
    net.check_tree(tree)?;
    let clean = net.compose_nodes(tree, tokens, &mut |_, _| {})?;
    let (noisy, noise_sigmas) = corrupt(tokens, config)?;
    let corrupted = net.compose_nodes(tree, &noisy, &mut |_, _| {})?;
    let d_corrupted = sq_norm_diff(&corrupted[0], &clean[0]);
    if d_corrupted == 0.0 {
        return Err(Error::DegenerateCorruption);
    }
    let spans = node_spans(tree);
    let nodes = spans
        .par_iter()
        .enumerate()
        .map(|(node, (label, first_leaf, leaf_count))| {
            let patched = net.compose_nodes(tree, &noisy, &mut |id, t| {
                if id == node {
                    *t = clean[node].clone();
                }
            })?;
            let d = sq_norm_diff(&patched[0], &clean[0]);
            let covers = config
                .corrupt_leaves
                .iter()
                .any(|&l| (*first_leaf..first_leaf + leaf_count).contains(&l));
            Ok(NodeScore {
                node,
                label: label.clone(),
                first_leaf: *first_leaf,
                leaf_count: *leaf_count,
                covers_corruption: covers,
                restoration: 1.0 - d / d_corrupted,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TraceReport {
        tree: tree.to_canonical(),
        corrupt_leaves: config.corrupt_leaves.iter().copied().collect(),
        noise: config.noise,
        noise_sigmas,
        seed: config.seed,
        d_clean: 0.0,
        d_corrupted,
        nodes,
    })
}

fn sq_norm_diff(a: &Tensor, b: &Tensor) -> f64 {
    tensor::sq_dist(a.data(), b.data())
}

/// Pre-order id of the deepest node whose leaf span covers every leaf in
/// `leaves`.
pub fn lowest_covering_node(tree: &SyntaxTree, leaves: &BTreeSet<usize>) -> Option<usize> {
    let (lo, hi) = (*leaves.first()?, *leaves.last()?);
    node_spans(tree)
        .iter()
        .enumerate()
        .filter(|(_, (_, first, count))| *first <= lo && hi < first + count)
        .map(|(id, _)| id)
        .next_back()
}
