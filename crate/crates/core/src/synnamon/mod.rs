// SPDX-License-Identifier: MIT OR Apache-2.0

//! Syntactic neural module nets.
//!
//! One small module per production rule. A sentence is encoded by walking
//! its tree bottom-up: preterminal modules read a token embedding, every
//! other module reads the left-to-right concatenation of its children's
//! outputs (`1 × N·D` for `N` children) and emits `1 × D`.

mod checkpoint;
mod distill;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::ptb::{ProductionRule, SyntaxTree};
use crate::rng::SplitMix64;
use crate::tensor::{self, Tensor};

pub use checkpoint::{load_net, save_net};
pub use distill::{
    chance_mse, distill, eval_module_generalization, evaluate, make_split, mean_predictor_score, train_module,
    validate_split, DistillConfig, DistillationReport, EpochRecord, Example, ModulePair, Split,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    /// `x·W + b`
    #[default]
    Linear,
    /// `relu(x·W + b)`
    Nonlin,
    /// `relu(x·W1 + b1)·W2 + b2`
    Double,
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "nonlin" => Ok(Self::Nonlin),
            "double" => Ok(Self::Double),
            other => Err(Error::Invalid(format!("unknown architecture {other:?}"))),
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::Linear => "linear",
            Arch::Nonlin => "nonlin",
            Arch::Double => "double",
        })
    }
}

/// Parameters of one rule's module: `[W, b]`, or `[W1, b1, W2, b2]` for
/// [`Arch::Double`].
#[derive(Debug, Clone, PartialEq)]
pub struct Module {
    pub rule: ProductionRule,
    pub params: Vec<Tensor>,
}

impl Module {
    pub fn input_width(&self) -> usize {
        self.params[0].rows()
    }

    fn forward(&self, arch: Arch, x: &Tensor) -> Result<Tensor> {
        let p = &self.params;
        let first = tensor::add(&tensor::matmul(x, &p[0])?, &p[1])?;
        match arch {
            Arch::Linear => Ok(first),
            Arch::Nonlin => Ok(tensor::relu(&first)),
            Arch::Double => tensor::add(&tensor::matmul(&tensor::relu(&first), &p[2])?, &p[3]),
        }
    }

    fn forward_graph(arch: Arch, g: &mut Graph, params: &[Var], x: Var) -> Result<Var> {
        let h = g.matmul(x, params[0])?;
        let first = g.add(h, params[1])?;
        match arch {
            Arch::Linear => Ok(first),
            Arch::Nonlin => Ok(g.relu(first)),
            Arch::Double => {
                let a = g.relu(first);
                let h = g.matmul(a, params[2])?;
                g.add(h, params[3])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModuleNet {
    pub dim: usize,
    pub hidden: usize,
    pub arch: Arch,
    /// When false, preterminals pass their token embedding through
    /// unchanged and lexical rules need no module.
    pub pos_modules: bool,
    pub modules: Vec<Module>,
    index: HashMap<ProductionRule, usize>,
}

/// Uniform Xavier bound for a `fan_in × fan_out` weight.
pub fn xavier_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn xavier(rng: &mut SplitMix64, rows: usize, cols: usize) -> Tensor {
    let a = xavier_limit(rows, cols);
    let data = (0..rows * cols).map(|_| rng.uniform(-a, a)).collect();
    Tensor::new(vec![rows, cols], data).expect("shape matches data")
}

/// Build one module per rule. Weights are Xavier-uniform from a stream keyed
/// by the rule's display string, so a rule's initial weights do not depend
/// on which other rules are present. Biases start at zero.
pub fn build_net(
    vocab: &[ProductionRule],
    dim: usize,
    arch: Arch,
    hidden: Option<usize>,
    seed: u64,
) -> Result<ModuleNet> {
    if vocab.is_empty() {
        return Err(Error::Invalid("rule vocabulary is empty".into()));
    }
    if dim == 0 {
        return Err(Error::Invalid("embedding dimension must be at least 1".into()));
    }
    let hidden = hidden.unwrap_or(dim);
    if hidden == 0 {
        return Err(Error::Invalid("hidden width must be at least 1".into()));
    }
    let mut seen = BTreeSet::new();
    let mut modules = Vec::with_capacity(vocab.len());
    for rule in vocab {
        if !seen.insert(rule) {
            return Err(Error::DuplicateRule(rule.to_string()));
        }
        let mut rng = SplitMix64::keyed(seed, &rule.to_string());
        let fan_in = rule.arity() * dim;
        let params = match arch {
            Arch::Linear | Arch::Nonlin => vec![xavier(&mut rng, fan_in, dim), Tensor::zeros(&[1, dim])],
            Arch::Double => vec![
                xavier(&mut rng, fan_in, hidden),
                Tensor::zeros(&[1, hidden]),
                xavier(&mut rng, hidden, dim),
                Tensor::zeros(&[1, dim]),
            ],
        };
        modules.push(Module {
            rule: rule.clone(),
            params,
        });
    }
    ModuleNet::from_modules(dim, hidden, arch, modules)
}

impl ModuleNet {
    pub fn from_modules(dim: usize, hidden: usize, arch: Arch, modules: Vec<Module>) -> Result<Self> {
        let mut index = HashMap::with_capacity(modules.len());
        for (i, m) in modules.iter().enumerate() {
            if index.insert(m.rule.clone(), i).is_some() {
                return Err(Error::DuplicateRule(m.rule.to_string()));
            }
            let fan_in = m.rule.arity() * dim;
            let expected: Vec<[usize; 2]> = match arch {
                Arch::Linear | Arch::Nonlin => vec![[fan_in, dim], [1, dim]],
                Arch::Double => vec![[fan_in, hidden], [1, hidden], [hidden, dim], [1, dim]],
            };
            let actual: Vec<&[usize]> = m.params.iter().map(Tensor::shape).collect();
            if actual.len() != expected.len() || actual.iter().zip(&expected).any(|(a, e)| a != e) {
                return Err(Error::InvalidShape {
                    op: "ModuleNet::from_modules",
                    shape: m.params.iter().flat_map(|t| t.shape().to_vec()).collect(),
                    reason: "module parameter shapes disagree with rule arity, dim and architecture",
                });
            }
        }
        Ok(Self {
            dim,
            hidden,
            arch,
            pos_modules: true,
            modules,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.modules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modules.is_empty()
    }

    pub fn module_index(&self, rule: &ProductionRule) -> Option<usize> {
        self.index.get(rule).copied()
    }

    pub fn module(&self, rule: &ProductionRule) -> Option<&Module> {
        self.module_index(rule).map(|i| &self.modules[i])
    }

    pub fn module_mut(&mut self, rule: &ProductionRule) -> Option<&mut Module> {
        self.module_index(rule).map(|i| &mut self.modules[i])
    }

    pub fn param_count(&self) -> usize {
        self.modules.iter().flat_map(|m| &m.params).map(Tensor::len).sum()
    }

    /// Whether every production the net would need for `tree` is present.
    pub fn check_tree(&self, tree: &SyntaxTree) -> Result<()> {
        for rule in tree.productions() {
            if rule.is_lexical() && !self.pos_modules {
                continue;
            }
            if !self.index.contains_key(&rule) {
                return Err(Error::UnseenProduction(rule.to_string()));
            }
        }
        Ok(())
    }

    fn check_inputs(&self, tree: &SyntaxTree, token_embeddings: &Tensor) -> Result<()> {
        let leaves = tree.leaf_count();
        let (rows, cols) = token_embeddings.dims();
        if rows != leaves {
            return Err(Error::LeafCount { leaves, rows });
        }
        if cols != self.dim {
            return Err(Error::ShapeMismatch {
                op: "compose",
                left: vec![leaves, self.dim],
                right: token_embeddings.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Sentence embedding (`1 × D`) for `tree` given one row per token.
    pub fn compose(&self, tree: &SyntaxTree, token_embeddings: &Tensor) -> Result<Tensor> {
        let mut outputs = self.compose_nodes(tree, token_embeddings, &mut |_, _| {})?;
        Ok(outputs.swap_remove(0))
    }

    /// Every node's output, indexed by pre-order position (root is 0).
    ///
    /// `hook` sees each output right after it is computed and before the
    /// parent consumes it, and may overwrite it.
    pub fn compose_nodes(
        &self,
        tree: &SyntaxTree,
        token_embeddings: &Tensor,
        hook: &mut dyn FnMut(usize, &mut Tensor),
    ) -> Result<Vec<Tensor>> {
        self.check_inputs(tree, token_embeddings)?;
        let token_embeddings = token_embeddings.as_matrix();
        let mut outputs = vec![Tensor::zeros(&[1, self.dim]); tree.node_count()];
        let mut next_id = 0;
        let mut next_leaf = 0;
        self.eval_node(
            tree,
            &token_embeddings,
            &mut next_id,
            &mut next_leaf,
            &mut outputs,
            hook,
        )?;
        Ok(outputs)
    }

    fn eval_node(
        &self,
        node: &SyntaxTree,
        tokens: &Tensor,
        next_id: &mut usize,
        next_leaf: &mut usize,
        outputs: &mut [Tensor],
        hook: &mut dyn FnMut(usize, &mut Tensor),
    ) -> Result<()> {
        let id = *next_id;
        *next_id += 1;
        let (input, rule) = if node.is_leaf() {
            let row = tokens.row_tensor(*next_leaf);
            *next_leaf += 1;
            if !self.pos_modules {
                let mut out = row;
                hook(id, &mut out);
                outputs[id] = out;
                return Ok(());
            }
            (row, node.rule())
        } else {
            let mut child_ids = Vec::with_capacity(node.children().len());
            for child in node.children() {
                child_ids.push(*next_id);
                self.eval_node(child, tokens, next_id, next_leaf, outputs, hook)?;
            }
            let parts: Vec<&Tensor> = child_ids.iter().map(|&c| &outputs[c]).collect();
            (tensor::concat_rows(&parts)?, node.rule())
        };
        let module = self
            .module(&rule)
            .ok_or_else(|| Error::UnseenProduction(rule.to_string()))?;
        let mut out = module.forward(self.arch, &input)?;
        if !out.is_finite() {
            return Err(Error::NonFinite("module forward"));
        }
        hook(id, &mut out);
        outputs[id] = out;
        Ok(())
    }

    /// Differentiable [`compose`](Self::compose). Parameter leaves are created
    /// on first use and cached in `params`, so modules shared across a batch
    /// accumulate gradient in one place.
    pub fn compose_graph(
        &self,
        g: &mut Graph,
        params: &mut ParamVars,
        tree: &SyntaxTree,
        token_embeddings: &Tensor,
    ) -> Result<Var> {
        self.check_inputs(tree, token_embeddings)?;
        let tokens = token_embeddings.as_matrix();
        let mut next_leaf = 0;
        self.graph_node(g, params, tree, &tokens, &mut next_leaf)
    }

    fn graph_node(
        &self,
        g: &mut Graph,
        params: &mut ParamVars,
        node: &SyntaxTree,
        tokens: &Tensor,
        next_leaf: &mut usize,
    ) -> Result<Var> {
        let input = if node.is_leaf() {
            let x = g.constant(tokens.row_tensor(*next_leaf));
            *next_leaf += 1;
            if !self.pos_modules {
                return Ok(x);
            }
            x
        } else {
            let children = node
                .children()
                .iter()
                .map(|c| self.graph_node(g, params, c, tokens, next_leaf))
                .collect::<Result<Vec<_>>>()?;
            g.concat_rows(&children)?
        };
        let rule = node.rule();
        let idx = self
            .module_index(&rule)
            .ok_or_else(|| Error::UnseenProduction(rule.to_string()))?;
        let vars = params.get_or_insert(g, idx, &self.modules[idx]);
        Module::forward_graph(self.arch, g, &vars, input)
    }
}

/// Lazily created parameter leaves for one graph, keyed by module index.
#[derive(Debug, Default)]
pub struct ParamVars {
    vars: HashMap<usize, Vec<Var>>,
}

impl ParamVars {
    pub fn new() -> Self {
        Self::default()
    }

    fn get_or_insert(&mut self, g: &mut Graph, idx: usize, module: &Module) -> Vec<Var> {
        self.vars
            .entry(idx)
            .or_insert_with(|| module.params.iter().map(|p| g.leaf(p.clone())).collect())
            .clone()
    }

    pub fn get(&self, module: usize) -> Option<&[Var]> {
        self.vars.get(&module).map(Vec::as_slice)
    }

    /// Modules touched so far, ascending.
    pub fn modules(&self) -> Vec<usize> {
        let mut m: Vec<usize> = self.vars.keys().copied().collect();
        m.sort_unstable();
        m
    }
}
