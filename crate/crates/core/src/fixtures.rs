// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic corpora and teachers for tests, benchmarks and demos.
//!
//! Trees come from a small recursive grammar over Penn-style labels. Each
//! word has a fixed embedding drawn from a stream keyed by the word, so the
//! same word gets the same vector in every sentence.

use std::collections::BTreeMap;

use crate::cacr::AttentionLayer;
use crate::error::Result;
use crate::ptb::{ProductionRule, SyntaxTree};
use crate::rng::SplitMix64;
use crate::synnamon::{build_net, Arch, Example, ModuleNet, ModulePair};
use crate::tensor::{self, Tensor};

const LEXICON: &[(&str, &[&str])] = &[
    ("DT", &["the", "a"]),
    ("NN", &["cat", "dog", "mug"]),
    ("JJ", &["red", "small"]),
    ("VBZ", &["sits", "runs", "sees"]),
    ("IN", &["on", "near"]),
    ("RB", &["slowly", "often"]),
    ("CC", &["and", "but"]),
    ("PRP", &["it", "she"]),
];

fn word(rng: &mut SplitMix64, pos: &str) -> SyntaxTree {
    let words = LEXICON.iter().find(|(p, _)| *p == pos).expect("known tag").1;
    SyntaxTree::leaf(pos, words[rng.below(words.len())])
}

fn node(label: &str, children: Vec<SyntaxTree>) -> SyntaxTree {
    SyntaxTree::node(label, children).expect("children are nonempty")
}

fn noun_phrase(rng: &mut SplitMix64, depth: usize) -> SyntaxTree {
    let roll = rng.below(10);
    match roll {
        0..=3 => node("NP", vec![word(rng, "DT"), word(rng, "NN")]),
        4 | 5 => node("NP", vec![word(rng, "DT"), word(rng, "JJ"), word(rng, "NN")]),
        6 => node("NP", vec![word(rng, "PRP")]),
        7 => node("NP", vec![word(rng, "NN")]),
        _ if depth > 0 => node("NP", vec![noun_phrase(rng, depth - 1), prep_phrase(rng, depth - 1)]),
        _ => node("NP", vec![word(rng, "DT"), word(rng, "NN")]),
    }
}

fn prep_phrase(rng: &mut SplitMix64, depth: usize) -> SyntaxTree {
    node("PP", vec![word(rng, "IN"), noun_phrase(rng, depth)])
}

fn verb_phrase(rng: &mut SplitMix64, depth: usize) -> SyntaxTree {
    match rng.below(6) {
        0 => node("VP", vec![word(rng, "VBZ")]),
        1 | 2 => node("VP", vec![word(rng, "VBZ"), noun_phrase(rng, depth)]),
        3 => node("VP", vec![word(rng, "VBZ"), word(rng, "RB")]),
        4 if depth > 0 => node("VP", vec![word(rng, "VBZ"), prep_phrase(rng, depth - 1)]),
        _ => node("VP", vec![word(rng, "VBZ"), noun_phrase(rng, depth)]),
    }
}

fn sentence(rng: &mut SplitMix64, depth: usize) -> SyntaxTree {
    if depth > 1 && rng.below(8) == 0 {
        return node(
            "S",
            vec![sentence(rng, depth - 1), word(rng, "CC"), sentence(rng, depth - 1)],
        );
    }
    node("S", vec![noun_phrase(rng, depth), verb_phrase(rng, depth)])
}

/// `n` random trees; `depth` bounds recursion through PP and coordination.
pub fn synthetic_trees(n: usize, depth: usize, seed: u64) -> Vec<SyntaxTree> {
    let mut rng = SplitMix64::keyed(seed, "trees");
    (0..n).map(|_| sentence(&mut rng, depth)).collect()
}

/// Distinct productions of `trees`, sorted.
pub fn vocabulary<'a>(trees: impl IntoIterator<Item = &'a SyntaxTree>) -> Vec<ProductionRule> {
    let mut v: Vec<ProductionRule> = trees.into_iter().flat_map(|t| t.productions()).collect();
    v.sort();
    v.dedup();
    v
}

/// Fixed standard-normal vector for `word`.
pub fn word_embedding(word: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = SplitMix64::keyed(seed, &format!("word:{word}"));
    (0..dim).map(|_| rng.normal()).collect()
}

pub fn token_matrix(tree: &SyntaxTree, dim: usize, seed: u64) -> Tensor {
    let data: Vec<f64> = tree
        .tokens()
        .iter()
        .flat_map(|w| word_embedding(w, dim, seed))
        .collect();
    Tensor::new(vec![tree.leaf_count(), dim], data).expect("one row per token")
}

/// Examples whose targets are `teacher`'s own outputs.
pub fn teacher_examples(trees: &[SyntaxTree], teacher: &ModuleNet, seed: u64) -> Result<Vec<Example>> {
    trees
        .iter()
        .map(|t| {
            let tokens = token_matrix(t, teacher.dim, seed);
            let target = teacher.compose(t, &tokens)?;
            Ok(Example {
                tree: t.clone(),
                tokens,
                target,
            })
        })
        .collect()
}

/// Examples with i.i.d. standard-normal targets.
pub fn noise_examples(trees: &[SyntaxTree], dim: usize, seed: u64) -> Vec<Example> {
    let mut rng = SplitMix64::keyed(seed, "noise-targets");
    trees
        .iter()
        .map(|t| Example {
            tree: t.clone(),
            tokens: token_matrix(t, dim, seed),
            target: Tensor::row((0..dim).map(|_| rng.normal()).collect()),
        })
        .collect()
}

/// Synthetic corpus plus a randomly initialized teacher of `arch`.
pub struct TeacherCorpus {
    pub teacher: ModuleNet,
    pub vocab: Vec<ProductionRule>,
    pub examples: Vec<Example>,
}

pub fn teacher_corpus(n: usize, dim: usize, arch: Arch, seed: u64) -> Result<TeacherCorpus> {
    let trees = synthetic_trees(n, 1, seed);
    let vocab = vocabulary(&trees);
    let teacher = build_net(&vocab, dim, arch, None, seed ^ 0x7EAC_4E12)?;
    let examples = teacher_examples(&trees, &teacher, seed)?;
    Ok(TeacherCorpus {
        teacher,
        vocab,
        examples,
    })
}

/// Groups for probing one binary module. A linear map `f_a` generates
/// group `a`'s targets, a different map `f_c` group `c`'s, and group `b`
/// targets are the midpoint `(f_a + f_c) / 2`. Inputs for every group are
/// drawn from the same distribution.
pub fn interpolation_groups(dim: usize, per_group: usize, seed: u64) -> BTreeMap<String, Vec<ModulePair>> {
    let mut rng = SplitMix64::keyed(seed, "interpolation");
    let matrix = |rng: &mut SplitMix64| {
        Tensor::new(
            vec![2 * dim, dim],
            (0..2 * dim * dim).map(|_| rng.normal() / (dim as f64).sqrt()).collect(),
        )
        .expect("shape")
    };
    let f_a = matrix(&mut rng);
    let f_c = matrix(&mut rng);
    let mut groups = BTreeMap::new();
    for (name, weight_c) in [("a", 0.0), ("b", 0.5), ("c", 1.0)] {
        let pairs = (0..per_group)
            .map(|_| {
                let left = Tensor::row((0..dim).map(|_| rng.normal()).collect());
                let right = Tensor::row((0..dim).map(|_| rng.normal()).collect());
                let x = tensor::concat_rows(&[&left, &right]).expect("rows");
                let ya = tensor::matmul(&x, &f_a).expect("shape");
                let yc = tensor::matmul(&x, &f_c).expect("shape");
                let target = tensor::add(&ya.scale(1.0 - weight_c), &yc.scale(weight_c)).expect("shape");
                ModulePair {
                    children: vec![left, right],
                    target,
                }
            })
            .collect();
        groups.insert(name.to_string(), pairs);
    }
    groups
}

/// Random raw-score blocks for one layer.
pub fn random_attention_layer(n_language: usize, n_vision: usize, seed: u64) -> AttentionLayer {
    let mut rng = SplitMix64::keyed(seed, "attention");
    let n = n_language + n_vision;
    let full = Tensor::new(vec![n, n], (0..n * n).map(|_| rng.normal()).collect()).expect("shape");
    AttentionLayer::from_full(0, &full, n_language, n_vision).expect("consistent sizes")
}

/// A layer whose vision block is the language block conjugated by a
/// permutation, with the permutation as both cross blocks. Its loss is
/// exactly zero.
pub fn congruent_attention_layer(n: usize, seed: u64) -> AttentionLayer {
    let mut rng = SplitMix64::keyed(seed, "congruent");
    let mut perm: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut perm);
    let mut p = Tensor::zeros(&[n, n]);
    for (i, &j) in perm.iter().enumerate() {
        p.set(i, j, 1.0);
    }
    let ll = Tensor::new(vec![n, n], (0..n * n).map(|_| rng.normal()).collect()).expect("shape");
    let vv = tensor::matmul(&tensor::matmul(&p.transpose(), &ll).expect("square"), &p).expect("square");
    AttentionLayer::from_blocks(0, ll, p.clone(), p.transpose(), vv).expect("consistent sizes")
}

/// The tree and token vectors used in pooling examples:
/// `(S (NP (A a) (B b)) (C c))` over `[1,0]`, `[0,1]`, `[1,1]`.
pub fn pooling_example() -> (SyntaxTree, Tensor) {
    let tree = "(S (NP (A a) (B b)) (C c))".parse().expect("valid tree");
    let tokens = Tensor::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).expect("rows");
    (tree, tokens)
}
