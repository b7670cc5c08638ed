// SPDX-License-Identifier: MIT OR Apache-2.0

//! Distilling teacher sentence embeddings into a module net.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Arch, Module, ModuleNet, ParamVars};
use crate::autodiff::Graph;
use crate::error::{Error, Result};
use crate::optim::{AdamConfig, AdamState};
use crate::ptb::{ProductionRule, SyntaxTree};
use crate::rng::SplitMix64;
use crate::tensor::{self, Tensor};

/// A tree, one embedding row per token, and the teacher's sentence vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub tree: SyntaxTree,
    pub tokens: Tensor,
    pub target: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            lr: 5e-5,
            epochs: 100,
            batch_size: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillationReport {
    pub arch: Arch,
    pub dim: usize,
    pub hidden: usize,
    pub modules: usize,
    pub train_size: usize,
    pub val_size: usize,
    pub chance_mse: f64,
    /// Denominator of every normalized score; equals `chance_mse` unless
    /// all targets coincide.
    pub normalizer: f64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub normalized_score: f64,
}

impl DistillationReport {
    pub fn curve_rows(&self) -> impl Iterator<Item = (usize, f64, f64, f64)> + '_ {
        self.epochs
            .iter()
            .map(|e| (e.epoch, e.train_mse, e.val_mse, e.normalized))
    }
}

/// Mean over unordered distinct pairs of `‖e_i − e_j‖² / D`.
///
/// Uses `Σ_{i<j} ‖e_i − e_j‖² = n · Σ_i ‖e_i − μ‖²`.
pub fn chance_mse(targets: &[&Tensor]) -> Result<f64> {
    let n = targets.len();
    if n < 2 {
        return Err(Error::Invalid(format!(
            "chance MSE needs at least 2 embeddings, got {n}"
        )));
    }
    let d = targets[0].len();
    if let Some(bad) = targets.iter().find(|t| t.len() != d) {
        return Err(Error::ShapeMismatch {
            op: "chance_mse",
            left: targets[0].shape().to_vec(),
            right: bad.shape().to_vec(),
        });
    }
    let mut mean = vec![0.0; d];
    for t in targets {
        for (m, v) in mean.iter_mut().zip(t.data()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let spread: f64 = targets.iter().map(|t| tensor::sq_dist(t.data(), &mean)).sum();
    Ok(2.0 * spread / ((n - 1) as f64 * d as f64))
}

/// Score of predicting the dataset mean for every target:
/// `mean_i ‖e_i − μ‖² / D` divided by [`chance_mse`], which is `(n−1)/(2n)`
/// whenever the targets are not all equal.
pub fn mean_predictor_score(targets: &[&Tensor]) -> Result<f64> {
    let chance = chance_mse(targets)?;
    let n = targets.len();
    let d = targets[0].len();
    let mut mean = vec![0.0; d];
    for t in targets {
        for (m, v) in mean.iter_mut().zip(t.data()) {
            *m += v / n as f64;
        }
    }
    let mse: f64 = targets
        .iter()
        .map(|t| tensor::sq_dist(t.data(), &mean) / d as f64)
        .sum::<f64>()
        / n as f64;
    Ok(mse / chance)
}

fn normalizer(data: &[Example]) -> Result<(f64, f64)> {
    let targets: Vec<&Tensor> = data.iter().map(|e| &e.target).collect();
    let chance = chance_mse(&targets)?;
    if chance > 0.0 {
        return Ok((chance, chance));
    }
    // All targets identical: fall back to their mean square.
    let t = targets[0];
    let scale = t.data().iter().map(|v| v * v).sum::<f64>() / t.len() as f64;
    if scale == 0.0 {
        return Err(Error::Invalid(
            "all teacher embeddings are zero; normalized score is undefined".into(),
        ));
    }
    Ok((chance, scale))
}

/// Mean per-example MSE over `indices`; examples are evaluated in parallel
/// and summed in index order.
pub fn evaluate(net: &ModuleNet, data: &[Example], indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::EmptySplit("evaluation"));
    }
    let losses: Vec<f64> = indices
        .par_iter()
        .map(|&i| {
            let e = &data[i];
            tensor::mse(&net.compose(&e.tree, &e.tokens)?, &e.target)
        })
        .collect::<Result<_>>()?;
    let total: f64 = losses.iter().sum();
    let mse = total / indices.len() as f64;
    if !mse.is_finite() {
        return Err(Error::NonFinite("evaluation loss"));
    }
    Ok(mse)
}

/// Flat parameter slot of `(module, param)`.
fn slots(net: &ModuleNet) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(net.modules.len());
    let mut acc = 0;
    for m in &net.modules {
        offsets.push(acc);
        acc += m.params.len();
    }
    offsets
}

/// Train `net` in place; returns the learning curve and the best
/// validation score. The net keeps its final-epoch parameters.
pub fn distill(
    net: &mut ModuleNet,
    data: &[Example],
    split: &Split,
    config: &DistillConfig,
) -> Result<DistillationReport> {
    if split.train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if split.val.is_empty() {
        return Err(Error::EmptySplit("validation"));
    }
    if config.batch_size == 0 {
        return Err(Error::Invalid("batch size must be at least 1".into()));
    }
    let trees: Vec<&SyntaxTree> = data.iter().map(|e| &e.tree).collect();
    validate_split(&trees, split)?;
    for &i in split.train.iter().chain(&split.val) {
        net.check_tree(&data[i].tree)?;
    }
    let (chance, norm) = normalizer(data)?;

    let offsets = slots(net);
    let mut adam = AdamState::new(
        AdamConfig::with_lr(config.lr),
        net.modules.iter().flat_map(|m| &m.params),
    );
    let total_slots: usize = net.modules.iter().map(|m| m.params.len()).sum();
    let mut order = split.train.clone();
    let mut rng = SplitMix64::keyed(config.seed, "distill-shuffle");
    let mut epochs = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(config.batch_size) {
            let mut g = Graph::new();
            let mut vars = ParamVars::new();
            let mut losses = Vec::with_capacity(batch.len());
            for &i in batch {
                let e = &data[i];
                let out = net.compose_graph(&mut g, &mut vars, &e.tree, &e.tokens)?;
                let target = g.constant(e.target.as_matrix());
                losses.push(g.mse(out, target)?);
            }
            let sum = g.sum_scalars(&losses)?;
            let loss = g.scale(sum, 1.0 / batch.len() as f64);
            if !g.value(loss).is_finite() {
                return Err(Error::NonFinite("training loss"));
            }
            let mut grads = g.backward(loss)?;
            let mut flat: Vec<Option<Tensor>> = vec![None; total_slots];
            for m in vars.modules() {
                for (p, &v) in vars.get(m).expect("listed module").iter().enumerate() {
                    flat[offsets[m] + p] = grads.take(v);
                }
            }
            let grad_refs: Vec<Option<&Tensor>> = flat.iter().map(Option::as_ref).collect();
            let mut params: Vec<&mut Tensor> = net.modules.iter_mut().flat_map(|m| m.params.iter_mut()).collect();
            adam.step(&mut params, &grad_refs)?;
        }
        let train_mse = evaluate(net, data, &split.train)?;
        let val_mse = evaluate(net, data, &split.val)?;
        log::debug!("epoch {epoch}: train {train_mse:.6} val {val_mse:.6}");
        epochs.push(EpochRecord {
            epoch,
            train_mse,
            val_mse,
            normalized: val_mse / norm,
        });
    }

    let (best_epoch, best_val_mse) = match epochs.iter().min_by(|a, b| a.val_mse.total_cmp(&b.val_mse)) {
        Some(best) => (best.epoch, best.val_mse),
        None => (0, evaluate(net, data, &split.val)?),
    };
    Ok(DistillationReport {
        arch: net.arch,
        dim: net.dim,
        hidden: net.hidden,
        modules: net.len(),
        train_size: split.train.len(),
        val_size: split.val.len(),
        chance_mse: chance,
        normalizer: norm,
        epochs,
        best_epoch,
        best_val_mse,
        normalized_score: best_val_mse / norm,
    })
}

/// Random split whose validation trees only use productions that also
/// occur in training trees.
///
/// Trees are visited in seeded random order; each is moved to validation
/// only if every one of its productions would still occur in the remaining
/// training trees. Stops once `val_fraction` of the corpus is moved, so the
/// validation set can come out smaller when the corpus is tightly coupled.
pub fn make_split(trees: &[&SyntaxTree], val_fraction: f64, seed: u64) -> Result<Split> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::Invalid(format!(
            "validation fraction must be in [0, 1), got {val_fraction}"
        )));
    }
    let n = trees.len();
    let want = (val_fraction * n as f64).round() as usize;
    let productions: Vec<Vec<ProductionRule>> = trees.iter().map(|t| t.productions()).collect();
    let mut counts: HashMap<&ProductionRule, usize> = HashMap::new();
    for p in productions.iter().flatten() {
        *counts.entry(p).or_default() += 1;
    }
    let mut order: Vec<usize> = (0..n).collect();
    SplitMix64::keyed(seed, "split").shuffle(&mut order);
    let mut in_val = vec![false; n];
    let mut moved = 0;
    for &i in &order {
        if moved == want {
            break;
        }
        let mut own: HashMap<&ProductionRule, usize> = HashMap::new();
        for p in &productions[i] {
            *own.entry(p).or_default() += 1;
        }
        if own.iter().all(|(p, &c)| counts[p] > c) {
            for (p, c) in own {
                *counts.get_mut(p).unwrap() -= c;
            }
            in_val[i] = true;
            moved += 1;
        }
    }
    let (val, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| in_val[i]);
    Ok(Split { train, val })
}

/// Every validation production must occur in some training tree.
pub fn validate_split(trees: &[&SyntaxTree], split: &Split) -> Result<()> {
    let train: std::collections::HashSet<ProductionRule> =
        split.train.iter().flat_map(|&i| trees[i].productions()).collect();
    for &i in &split.val {
        if let Some(p) = trees[i].productions().into_iter().find(|p| !train.contains(p)) {
            return Err(Error::SplitClosure(format!(
                "validation tree {i} uses {p}, which no training tree contains"
            )));
        }
    }
    Ok(())
}

/// Children's outputs (each `1 × D`) and the target the module should emit.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulePair {
    pub children: Vec<Tensor>,
    pub target: Tensor,
}

fn pair_input(module: &Module, pair: &ModulePair, dim: usize) -> Result<Tensor> {
    let arity = module.rule.arity();
    if pair.children.len() != arity || pair.children.iter().any(|c| c.len() != dim) || pair.target.len() != dim {
        return Err(Error::ArityMismatch {
            rule: module.rule.to_string(),
            expected: arity,
            actual: pair.children.len(),
        });
    }
    let parts: Vec<&Tensor> = pair.children.iter().collect();
    Ok(tensor::concat_rows(&parts)?.as_matrix())
}

/// Fit a single module to `pairs` with full-batch Adam.
pub fn train_module(module: &mut Module, arch: Arch, pairs: &[ModulePair], lr: f64, epochs: usize) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptySplit("module training"));
    }
    let dim = module.params.last().expect("module has parameters").cols();
    let inputs: Vec<Tensor> = pairs
        .iter()
        .map(|p| pair_input(module, p, dim))
        .collect::<Result<_>>()?;
    let mut adam = AdamState::new(AdamConfig::with_lr(lr), &module.params);
    let mut last = f64::INFINITY;
    for _ in 0..epochs {
        let mut g = Graph::new();
        let vars: Vec<_> = module.params.iter().map(|p| g.leaf(p.clone())).collect();
        let mut losses = Vec::with_capacity(pairs.len());
        for (x, p) in inputs.iter().zip(pairs) {
            let x = g.constant(x.clone());
            let out = Module::forward_graph(arch, &mut g, &vars, x)?;
            let t = g.constant(p.target.as_matrix());
            losses.push(g.mse(out, t)?);
        }
        let sum = g.sum_scalars(&losses)?;
        let loss = g.scale(sum, 1.0 / pairs.len() as f64);
        last = g.value(loss).data()[0];
        let mut grads = g.backward(loss)?;
        let taken: Vec<Option<Tensor>> = vars.iter().map(|&v| grads.take(v)).collect();
        let refs: Vec<Option<&Tensor>> = taken.iter().map(Option::as_ref).collect();
        let mut params: Vec<&mut Tensor> = module.params.iter_mut().collect();
        adam.step(&mut params, &refs)?;
    }
    Ok(last)
}

/// Mean MSE of `module` on each nonempty group.
pub fn eval_module_generalization(
    module: &Module,
    arch: Arch,
    groups: &BTreeMap<String, Vec<ModulePair>>,
) -> Result<BTreeMap<String, f64>> {
    let dim = module.params.last().expect("module has parameters").cols();
    let mut out = BTreeMap::new();
    for (name, pairs) in groups {
        if pairs.is_empty() {
            continue;
        }
        let mut total = 0.0;
        for p in pairs {
            let x = pair_input(module, p, dim)?;
            total += tensor::mse(&module.forward(arch, &x)?, &p.target)?;
        }
        out.insert(name.clone(), total / pairs.len() as f64);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ptb::parse_tree;
    use crate::synnamon::build_net;

    fn rows(rng: &mut SplitMix64, n: usize, d: usize) -> Vec<Tensor> {
        (0..n)
            .map(|_| Tensor::row((0..d).map(|_| rng.normal()).collect()))
            .collect()
    }

    fn brute_chance(ts: &[Tensor]) -> f64 {
        let mut total = 0.0;
        let mut pairs = 0;
        for i in 0..ts.len() {
            for j in i + 1..ts.len() {
                total += tensor::mse(&ts[i], &ts[j]).unwrap();
                pairs += 1;
            }
        }
        total / pairs as f64
    }

    #[test]
    fn chance_matches_brute_force() {
        let mut rng = SplitMix64::new(1);
        for n in [2, 3, 10, 57] {
            let ts = rows(&mut rng, n, 7);
            let refs: Vec<&Tensor> = ts.iter().collect();
            assert!((chance_mse(&refs).unwrap() - brute_chance(&ts)).abs() < 1e-12);
        }
        let one = rows(&mut rng, 1, 3);
        assert!(chance_mse(&[&one[0]]).is_err());
    }

    #[test]
    fn mean_predictor_is_half_minus_one_over_2n() {
        let mut rng = SplitMix64::new(2);
        let ts = rows(&mut rng, 200, 16);
        let refs: Vec<&Tensor> = ts.iter().collect();
        let s = mean_predictor_score(&refs).unwrap();
        assert!((s - 199.0 / 400.0).abs() < 1e-12);
    }

    fn corpus() -> Vec<SyntaxTree> {
        [
            "(S (NP (DT the) (NN cat)) (VP (VBZ sits)))",
            "(S (NP (DT a) (NN dog)) (VP (VBZ runs)))",
            "(S (NP (NN it)) (VP (VBZ sits)))",
            "(S (NP (DT the) (NN mug)) (VP (VBZ falls)))",
            "(S (NP (NN he)) (VP (VBZ runs)))",
            "(S (NP (DT the) (JJ red) (NN mug)) (VP (VBZ falls)))",
        ]
        .iter()
        .map(|t| parse_tree(t).unwrap())
        .collect()
    }

    #[test]
    fn split_respects_closure() {
        let trees = corpus();
        let refs: Vec<&SyntaxTree> = trees.iter().collect();
        for seed in 0..20 {
            let split = make_split(&refs, 0.5, seed).unwrap();
            validate_split(&refs, &split).unwrap();
            assert_eq!(split.train.len() + split.val.len(), trees.len());
            // The JJ tree holds the only NP -> DT JJ NN.
            assert!(!split.val.contains(&5));
        }
    }

    #[test]
    fn closure_violation_is_reported() {
        let trees = corpus();
        let refs: Vec<&SyntaxTree> = trees.iter().collect();
        let split = Split {
            train: vec![0, 1, 2, 3, 4],
            val: vec![5],
        };
        assert!(matches!(validate_split(&refs, &split), Err(Error::SplitClosure(_))));
    }

    fn examples(trees: &[SyntaxTree], teacher: &ModuleNet, seed: u64) -> Vec<Example> {
        let mut rng = SplitMix64::new(seed);
        trees
            .iter()
            .map(|t| {
                let tokens = Tensor::new(
                    vec![t.leaf_count(), teacher.dim],
                    (0..t.leaf_count() * teacher.dim).map(|_| rng.normal()).collect(),
                )
                .unwrap();
                let target = teacher.compose(t, &tokens).unwrap();
                Example {
                    tree: t.clone(),
                    tokens,
                    target,
                }
            })
            .collect()
    }

    fn vocab(trees: &[SyntaxTree]) -> Vec<ProductionRule> {
        let mut v: Vec<ProductionRule> = trees.iter().flat_map(|t| t.productions()).collect();
        v.sort();
        v.dedup();
        v
    }

    #[test]
    fn empty_splits_are_errors() {
        let trees = corpus();
        let net = build_net(&vocab(&trees), 3, Arch::Linear, None, 0).unwrap();
        let data = examples(&trees, &net, 1);
        let mut student = net.clone();
        let cfg = DistillConfig::default();
        let split = Split {
            train: vec![0, 1],
            val: vec![],
        };
        assert!(matches!(
            distill(&mut student, &data, &split, &cfg),
            Err(Error::EmptySplit(_))
        ));
        let split = Split {
            train: vec![],
            val: vec![0],
        };
        assert!(matches!(
            distill(&mut student, &data, &split, &cfg),
            Err(Error::EmptySplit(_))
        ));
    }

    #[test]
    fn self_distillation_does_not_drift() {
        let trees = corpus();
        let teacher = build_net(&vocab(&trees), 4, Arch::Double, None, 3).unwrap();
        let data = examples(&trees, &teacher, 2);
        let mut student = teacher.clone();
        let split = Split {
            train: vec![0, 1, 2, 3, 4, 5],
            val: vec![0, 2],
        };
        let cfg = DistillConfig {
            lr: 1e-3,
            epochs: 5,
            batch_size: 2,
            seed: 0,
        };
        let report = distill(&mut student, &data, &split, &cfg).unwrap();
        assert!(report.normalized_score < 1e-6);
        for (a, b) in student.modules.iter().zip(&teacher.modules) {
            for (pa, pb) in a.params.iter().zip(&b.params) {
                for (x, y) in pa.data().iter().zip(pb.data()) {
                    assert!((x - y).abs() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn distill_is_deterministic_and_learns() {
        let trees = corpus();
        let v = vocab(&trees);
        let teacher = build_net(&v, 3, Arch::Linear, None, 10).unwrap();
        let data = examples(&trees, &teacher, 4);
        let split = Split {
            train: (0..6).collect(),
            val: vec![1, 3],
        };
        let cfg = DistillConfig {
            lr: 1e-2,
            epochs: 40,
            batch_size: 4,
            seed: 7,
        };
        let mut a = build_net(&v, 3, Arch::Linear, None, 11).unwrap();
        let mut b = a.clone();
        let ra = distill(&mut a, &data, &split, &cfg).unwrap();
        let rb = distill(&mut b, &data, &split, &cfg).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a, b);
        assert!(ra.epochs.last().unwrap().train_mse < ra.epochs[0].train_mse);
        assert_eq!(ra.epochs.len(), 40);
        let best = ra.epochs.iter().map(|e| e.val_mse).fold(f64::INFINITY, f64::min);
        assert_eq!(ra.best_val_mse, best);
    }

    #[test]
    fn constant_teacher_is_absorbed_by_bias() {
        let trees = corpus();
        let v = vocab(&trees);
        let net = build_net(&v, 3, Arch::Linear, None, 1).unwrap();
        let mut data = examples(&trees, &net, 5);
        for e in &mut data {
            e.target = Tensor::row(vec![0.5, -1.0, 2.0]);
        }
        let mut student = net.clone();
        let split = Split {
            train: (0..6).collect(),
            val: vec![0, 4],
        };
        let cfg = DistillConfig {
            lr: 1e-2,
            epochs: 300,
            batch_size: 6,
            seed: 0,
        };
        let report = distill(&mut student, &data, &split, &cfg).unwrap();
        assert_eq!(report.chance_mse, 0.0);
        assert!(report.normalized_score < 0.01, "{}", report.normalized_score);
    }

    #[test]
    fn score_is_scale_invariant() {
        let trees = corpus();
        let v = vocab(&trees);
        let teacher = build_net(&v, 3, Arch::Nonlin, None, 2).unwrap();
        let data = examples(&trees, &teacher, 6);
        let scaled: Vec<Example> = data
            .iter()
            .map(|e| Example {
                target: e.target.scale(4.0),
                ..e.clone()
            })
            .collect();
        let mut student = build_net(&v, 3, Arch::Linear, None, 9).unwrap();
        let split = Split {
            train: (0..6).collect(),
            val: vec![2, 5],
        };
        let cfg = DistillConfig {
            epochs: 0,
            ..DistillConfig::default()
        };
        // Scaling the targets also needs the predictions scaled, so zero
        // the student: its MSE is then the targets' mean square.
        for m in &mut student.modules {
            for p in &mut m.params {
                *p = Tensor::zeros(p.shape());
            }
        }
        let a = distill(&mut student.clone(), &data, &split, &cfg).unwrap();
        let b = distill(&mut student, &scaled, &split, &cfg).unwrap();
        assert!((a.normalized_score - b.normalized_score).abs() < 1e-12);
        assert!((b.chance_mse / a.chance_mse - 16.0).abs() < 1e-9);
    }

    #[test]
    fn module_generalization_groups() {
        let rule: ProductionRule = "NP -> DT NN".parse().unwrap();
        let mut module = build_net(std::slice::from_ref(&rule), 2, Arch::Linear, None, 0)
            .unwrap()
            .modules
            .remove(0);
        let mut rng = SplitMix64::new(3);
        let make = |rng: &mut SplitMix64, shift: f64| -> Vec<ModulePair> {
            (0..20)
                .map(|_| {
                    let a = Tensor::row(vec![rng.normal(), rng.normal()]);
                    let b = Tensor::row(vec![rng.normal(), rng.normal()]);
                    let target = Tensor::row(vec![a.data()[0] + b.data()[1] + shift, a.data()[1] - shift]);
                    ModulePair {
                        children: vec![a, b],
                        target,
                    }
                })
                .collect()
        };
        let train = make(&mut rng, 0.0);
        let far = make(&mut rng, 3.0);
        train_module(&mut module, Arch::Linear, &train, 5e-2, 400).unwrap();
        let mut groups = BTreeMap::new();
        groups.insert("train".to_string(), train.clone());
        groups.insert("far".to_string(), far);
        groups.insert("empty".to_string(), vec![]);
        let scores = eval_module_generalization(&module, Arch::Linear, &groups).unwrap();
        assert_eq!(scores.len(), 2);
        assert!(scores["train"] < scores["far"]);
        assert!(scores["train"] < 1e-3, "{}", scores["train"]);

        let bad = ModulePair {
            children: vec![Tensor::row(vec![0.0, 0.0])],
            target: Tensor::row(vec![0.0, 0.0]),
        };
        groups.insert("bad".to_string(), vec![bad]);
        assert!(matches!(
            eval_module_generalization(&module, Arch::Linear, &groups),
            Err(Error::ArityMismatch {
                expected: 2,
                actual: 1,
                ..
            })
        ));
    }
}
