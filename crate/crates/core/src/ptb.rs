// SPDX-License-Identifier: MIT OR Apache-2.0

//! Penn Treebank bracketed constituency trees.
//!
//! Trees are read from s-expressions such as
//! `(S (NP (DT the) (NN mug)) (VP (VBZ sits)))`. A preterminal like
//! `(DT the)` is a leaf: it carries the part-of-speech label and the token.
//! Every other node carries a label and at least one child.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Right-hand side used for the lexical expansion `POS -> token`.
pub const TOKEN_SENTINEL: &str = "<TOKEN>";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SyntaxTree {
    label: String,
    children: Vec<SyntaxTree>,
    token: Option<String>,
}

impl SyntaxTree {
    /// Preterminal `(label token)`.
    pub fn leaf(label: impl Into<String>, token: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            children: Vec::new(),
            token: Some(token.into()),
        }
    }

    pub fn node(label: impl Into<String>, children: Vec<SyntaxTree>) -> Result<Self> {
        let label = label.into();
        if children.is_empty() {
            return Err(Error::Invalid(format!("node {label:?} has no children")));
        }
        Ok(Self {
            label,
            children,
            token: None,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn children(&self) -> &[SyntaxTree] {
        &self.children
    }

    pub fn token(&self) -> Option<&str> {
        self.token.as_deref()
    }

    pub fn is_leaf(&self) -> bool {
        self.token.is_some()
    }

    /// Tokens in left-to-right order.
    pub fn tokens(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_tokens(&mut out);
        out
    }

    fn collect_tokens<'a>(&'a self, out: &mut Vec<&'a str>) {
        match &self.token {
            Some(t) => out.push(t),
            None => self.children.iter().for_each(|c| c.collect_tokens(out)),
        }
    }

    pub fn leaf_count(&self) -> usize {
        if self.is_leaf() {
            1
        } else {
            self.children.iter().map(|c| c.leaf_count()).sum()
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(|c| c.node_count()).sum::<usize>()
    }

    /// Longest root-to-token path, in edges. See [`HeightMode`].
    pub fn height(&self, mode: HeightMode) -> usize {
        let with_pos = self.height_with_pos();
        match mode {
            HeightMode::WithPos => with_pos,
            HeightMode::WithoutPos => with_pos - 1,
        }
    }

    fn height_with_pos(&self) -> usize {
        if self.is_leaf() {
            1
        } else {
            1 + self.children.iter().map(|c| c.height_with_pos()).max().unwrap_or(0)
        }
    }

    /// The production rule expanding this node.
    pub fn rule(&self) -> ProductionRule {
        let rhs = if self.is_leaf() {
            vec![TOKEN_SENTINEL.to_string()]
        } else {
            self.children.iter().map(|c| c.label.clone()).collect()
        };
        ProductionRule {
            lhs: self.label.clone(),
            rhs,
        }
    }

    /// One rule per node, in pre-order, with multiplicity.
    pub fn productions(&self) -> Vec<ProductionRule> {
        let mut out = Vec::new();
        self.visit_preorder(&mut |node| out.push(node.rule()));
        out
    }

    pub fn visit_preorder<'a>(&'a self, f: &mut impl FnMut(&'a SyntaxTree)) {
        f(self);
        for c in &self.children {
            c.visit_preorder(f);
        }
    }

    /// Canonical single-line serialization.
    pub fn to_canonical(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for SyntaxTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.label)?;
        if let Some(t) = &self.token {
            write!(f, " {t}")?;
        }
        for c in &self.children {
            write!(f, " {c}")?;
        }
        write!(f, ")")
    }
}

impl FromStr for SyntaxTree {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_tree(s)
    }
}

/// How [`SyntaxTree::height`] counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeightMode {
    /// Edges down to the token, so `(NN dog)` has height 1.
    #[default]
    WithPos,
    /// Edges down to the preterminal, so `(NN dog)` has height 0.
    WithoutPos,
}

impl FromStr for HeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "with-pos" => Ok(Self::WithPos),
            "without-pos" => Ok(Self::WithoutPos),
            other => Err(Error::Invalid(format!("unknown height mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProductionRule {
    pub lhs: String,
    pub rhs: Vec<String>,
}

impl ProductionRule {
    pub fn new(lhs: impl Into<String>, rhs: &[&str]) -> Self {
        Self {
            lhs: lhs.into(),
            rhs: rhs.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn arity(&self) -> usize {
        self.rhs.len()
    }

    pub fn is_lexical(&self) -> bool {
        self.rhs.len() == 1 && self.rhs[0] == TOKEN_SENTINEL
    }
}

impl fmt::Display for ProductionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ->", self.lhs)?;
        for r in &self.rhs {
            write!(f, " {r}")?;
        }
        Ok(())
    }
}

impl FromStr for ProductionRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (lhs, rhs) = s
            .split_once("->")
            .ok_or_else(|| Error::Invalid(format!("rule {s:?} has no '->'")))?;
        let lhs = lhs.trim();
        let rhs: Vec<String> = rhs.split_whitespace().map(str::to_string).collect();
        if lhs.is_empty() || rhs.is_empty() {
            return Err(Error::Invalid(format!("malformed rule {s:?}")));
        }
        Ok(Self {
            lhs: lhs.to_string(),
            rhs,
        })
    }
}

impl Serialize for ProductionRule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ProductionRule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseOptions {
    /// `NP-SBJ-1` becomes `NP`. Labels starting with `-` (`-LRB-`) are kept.
    pub strip_functional_tags: bool,
    /// Remove `-NONE-` preterminals and any constituent left empty.
    pub drop_empty_elements: bool,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            strip_functional_tags: true,
            drop_empty_elements: true,
        }
    }
}

pub fn parse_tree(text: &str) -> Result<SyntaxTree> {
    parse_tree_with(text, ParseOptions::default())
}

pub fn parse_tree_with(text: &str, options: ParseOptions) -> Result<SyntaxTree> {
    let mut parser = Parser {
        src: text.as_bytes(),
        text,
        pos: 0,
        options,
    };
    parser.skip_ws();
    if parser.peek() != Some(b'(') {
        return Err(parser.error("expected '('"));
    }
    let tree = parser.node()?;
    parser.skip_ws();
    if parser.pos < parser.src.len() {
        let reason = if parser.peek() == Some(b')') {
            "unbalanced parentheses: unexpected ')'"
        } else {
            "trailing input after tree"
        };
        return Err(parser.error(reason));
    }
    let tree = tree.ok_or_else(|| Error::Parse {
        offset: 0,
        reason: "tree contains no tokens".into(),
    })?;
    Ok(tree)
}

struct Parser<'a> {
    src: &'a [u8],
    text: &'a str,
    pos: usize,
    options: ParseOptions,
}

enum Child {
    Node(Option<SyntaxTree>),
    Atom(String),
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(|b| b.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn error(&self, reason: &str) -> Error {
        Error::Parse {
            offset: self.pos,
            reason: reason.to_string(),
        }
    }

    fn atom(&mut self) -> &str {
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|b| !b.is_ascii_whitespace() && b != b'(' && b != b')')
        {
            self.pos += 1;
        }
        &self.text[start..self.pos]
    }

    /// Parses one parenthesized node. `None` means the node was an empty
    /// element that got dropped.
    fn node(&mut self) -> Result<Option<SyntaxTree>> {
        let open = self.pos;
        self.pos += 1;
        self.skip_ws();
        let label = match self.peek() {
            Some(b'(') | Some(b')') | None => String::new(),
            Some(_) => self.atom().to_string(),
        };
        let mut children = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                None => {
                    return Err(Error::Parse {
                        offset: open,
                        reason: "unbalanced parentheses: '(' is never closed".into(),
                    })
                }
                Some(b')') => {
                    self.pos += 1;
                    break;
                }
                Some(b'(') => children.push(Child::Node(self.node()?)),
                Some(_) => children.push(Child::Atom(self.atom().to_string())),
            }
        }

        if children.is_empty() {
            return Err(Error::Parse {
                offset: open,
                reason: "empty node".into(),
            });
        }
        let atoms = children.iter().filter(|c| matches!(c, Child::Atom(_))).count();
        if atoms > 0 {
            if atoms > 1 || children.len() > 1 {
                return Err(Error::Parse {
                    offset: open,
                    reason: "a preterminal must have exactly one token and no constituents".into(),
                });
            }
            if label.is_empty() {
                return Err(Error::Parse {
                    offset: open,
                    reason: "token without a part-of-speech label".into(),
                });
            }
            let Some(Child::Atom(token)) = children.pop() else {
                unreachable!()
            };
            if self.options.drop_empty_elements && label == "-NONE-" {
                return Ok(None);
            }
            return Ok(Some(SyntaxTree::leaf(self.clean_label(&label), token)));
        }

        let kept: Vec<SyntaxTree> = children
            .into_iter()
            .filter_map(|c| match c {
                Child::Node(n) => n,
                Child::Atom(_) => unreachable!(),
            })
            .collect();
        if kept.is_empty() {
            return Ok(None);
        }
        if label.is_empty() {
            // PTB files wrap each sentence as `( (S ...) )`.
            return match <[SyntaxTree; 1]>::try_from(kept) {
                Ok([only]) => Ok(Some(only)),
                Err(_) => Err(Error::Parse {
                    offset: open,
                    reason: "unlabeled node with several children".into(),
                }),
            };
        }
        Ok(Some(SyntaxTree {
            label: self.clean_label(&label),
            children: kept,
            token: None,
        }))
    }

    fn clean_label(&self, label: &str) -> String {
        if !self.options.strip_functional_tags || label.starts_with('-') {
            return label.to_string();
        }
        match label.find(['-', '=']) {
            Some(i) if i > 0 => label[..i].to_string(),
            _ => label.to_string(),
        }
    }
}

/// One line of a tree corpus. A line may carry an id before a tab.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub id: Option<String>,
    pub tree: SyntaxTree,
}

/// Parse a corpus with one tree per line; blank lines are skipped. Error
/// offsets are relative to the start of `text`.
pub fn parse_corpus(text: &str, options: ParseOptions) -> Result<Vec<CorpusEntry>> {
    let mut out = Vec::new();
    let mut line_start = 0;
    for line in text.split_inclusive('\n') {
        let base = line_start;
        line_start += line.len();
        let trimmed = line.trim_end_matches(['\n', '\r']);
        if trimmed.trim().is_empty() {
            continue;
        }
        let (id, body, offset) = match trimmed.split_once('\t') {
            Some((id, body)) => (Some(id.trim().to_string()), body, base + id.len() + 1),
            None => (None, trimmed, base),
        };
        let tree = parse_tree_with(body, options).map_err(|e| match e {
            Error::Parse { offset: o, reason } => Error::Parse {
                offset: offset + o,
                reason,
            },
            other => other,
        })?;
        out.push(CorpusEntry { id, tree });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterResult {
    /// Indices into the input corpus, ascending.
    pub kept: Vec<usize>,
    /// Rules used by kept trees with their counts in the kept trees, most
    /// frequent first, ties by rule string.
    pub vocab: Vec<(ProductionRule, usize)>,
}

/// Rule frequencies sorted by count (descending) then rule string.
pub fn rule_counts<'a>(trees: impl IntoIterator<Item = &'a SyntaxTree>) -> Vec<(ProductionRule, usize)> {
    let mut counts: HashMap<ProductionRule, usize> = HashMap::new();
    for t in trees {
        for r in t.productions() {
            *counts.entry(r).or_default() += 1;
        }
    }
    let mut v: Vec<(ProductionRule, usize)> = counts.into_iter().collect();
    v.sort_by(|(ra, ca), (rb, cb)| cb.cmp(ca).then_with(|| ra.to_string().cmp(&rb.to_string())));
    v
}

/// Keep trees whose height is in `heights` and whose every production is
/// among the `max_rules` most frequent productions of the height-filtered
/// trees.
pub fn filter_corpus(
    trees: &[SyntaxTree],
    heights: &BTreeSet<usize>,
    max_rules: usize,
    mode: HeightMode,
) -> FilterResult {
    let by_height: Vec<usize> = (0..trees.len())
        .filter(|&i| heights.contains(&trees[i].height(mode)))
        .collect();
    let top: BTreeSet<ProductionRule> = rule_counts(by_height.iter().map(|&i| &trees[i]))
        .into_iter()
        .take(max_rules)
        .map(|(r, _)| r)
        .collect();
    let kept: Vec<usize> = by_height
        .into_iter()
        .filter(|&i| trees[i].productions().iter().all(|r| top.contains(r)))
        .collect();
    let vocab = rule_counts(kept.iter().map(|&i| &trees[i]));
    FilterResult { kept, vocab }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MUG: &str = "(S (NP (DT the) (NN mug)) (VP (VBZ sits)))";

    #[test]
    fn parses_example_tree() {
        let t = parse_tree(MUG).unwrap();
        assert_eq!(t.label(), "S");
        assert_eq!(t.children().len(), 2);
        assert_eq!(t.tokens(), vec!["the", "mug", "sits"]);
        assert_eq!(t.to_string(), MUG);
    }

    #[test]
    fn whitespace_insensitive() {
        let t = parse_tree("  (S\n  (NP (DT the)\t(NN mug))\n (VP (VBZ sits)) )  ").unwrap();
        assert_eq!(t, parse_tree(MUG).unwrap());
    }

    #[test]
    fn unary_chain() {
        let t = parse_tree("(X (Y a))").unwrap();
        assert_eq!(t.tokens(), vec!["a"]);
        assert_eq!(t.height(HeightMode::WithPos), 2);
    }

    #[test]
    fn parse_errors() {
        match parse_tree("(S (NP") {
            Err(Error::Parse { offset, reason }) => {
                assert!(reason.contains("unbalanced"), "{reason}");
                assert_eq!(offset, 3);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_tree("(S (NP ()))"), Err(Error::Parse { offset: 7, .. })));
        assert!(parse_tree("(NN dog) x").is_err());
        assert!(parse_tree("(NN dog))").unwrap_err().to_string().contains("unbalanced"));
        assert!(parse_tree("(NP (DT the) dog)").is_err());
        assert!(parse_tree("(NN dog cat)").is_err());
        assert!(parse_tree("").is_err());
    }

    #[test]
    fn productions_of_example() {
        let t = parse_tree(MUG).unwrap();
        let mut rules: Vec<String> = t.productions().iter().map(|r| r.to_string()).collect();
        rules.sort();
        let mut expected = vec![
            "S -> NP VP",
            "NP -> DT NN",
            "VP -> VBZ",
            "DT -> <TOKEN>",
            "NN -> <TOKEN>",
            "VBZ -> <TOKEN>",
        ];
        expected.sort();
        assert_eq!(rules, expected);
        assert_eq!(t.productions().len(), t.node_count());
    }

    #[test]
    fn single_leaf_and_multiplicity() {
        let t = parse_tree("(NN dog)").unwrap();
        assert_eq!(t.productions(), vec![ProductionRule::new("NN", &[TOKEN_SENTINEL])]);
        let t = parse_tree("(X (A a) (A b))").unwrap();
        let counts = rule_counts([&t]);
        assert_eq!(counts[0], (ProductionRule::new("A", &[TOKEN_SENTINEL]), 2));
    }

    #[test]
    fn heights() {
        assert_eq!(parse_tree("(NN dog)").unwrap().height(HeightMode::WithPos), 1);
        assert_eq!(parse_tree("(NN dog)").unwrap().height(HeightMode::WithoutPos), 0);
        assert_eq!(parse_tree(MUG).unwrap().height(HeightMode::WithPos), 3);
        assert_eq!(parse_tree(MUG).unwrap().height(HeightMode::WithoutPos), 2);
        for k in 1..8 {
            let mut s = String::from("w");
            for i in 0..k {
                s = format!("(L{i} {s})");
            }
            assert_eq!(parse_tree(&s).unwrap().height(HeightMode::WithPos), k);
        }
    }

    #[test]
    fn strips_functional_tags_and_traces() {
        let t = parse_tree("( (S (NP-SBJ-1 (-NONE- *T*)) (NP-SBJ (PRP it)) (VP=2 (VBZ is)) (-LRB- -LRB-)))").unwrap();
        assert_eq!(t.to_string(), "(S (NP (PRP it)) (VP (VBZ is)) (-LRB- -LRB-))");
        let raw = parse_tree_with(
            "(S (NP-SBJ (PRP it)))",
            ParseOptions {
                strip_functional_tags: false,
                drop_empty_elements: false,
            },
        )
        .unwrap();
        assert_eq!(raw.children()[0].label(), "NP-SBJ");
    }

    #[test]
    fn rule_string_round_trip() {
        let r: ProductionRule = "NP -> DT JJ NN".parse().unwrap();
        assert_eq!(r.arity(), 3);
        assert_eq!(r.to_string().parse::<ProductionRule>().unwrap(), r);
        assert!("NP".parse::<ProductionRule>().is_err());
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(json, "\"NP -> DT JJ NN\"");
    }

    #[test]
    fn corpus_with_ids_and_offsets() {
        let text = "a\t(NN dog)\n\n(S (NP (NN cat)))\n(S (NP\n";
        match parse_corpus(text, ParseOptions::default()) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, text.rfind("(NP").unwrap()),
            other => panic!("{other:?}"),
        }
        let ok = parse_corpus("a\t(NN dog)\n\n(S (NP (NN cat)))\n", ParseOptions::default()).unwrap();
        assert_eq!(ok.len(), 2);
        assert_eq!(ok[0].id.as_deref(), Some("a"));
        assert_eq!(ok[1].id, None);
    }

    #[test]
    fn filter_examples() {
        let t = parse_tree(MUG).unwrap();
        let res = filter_corpus(std::slice::from_ref(&t), &BTreeSet::from([3]), 10, HeightMode::WithPos);
        assert_eq!(res.kept, vec![0]);
        assert_eq!(res.vocab.len(), 6);
        let res = filter_corpus(&[t], &BTreeSet::from([4, 5]), 300, HeightMode::WithPos);
        assert!(res.kept.is_empty());
        assert!(res.vocab.is_empty());
    }

    #[test]
    fn filter_respects_rule_budget() {
        let trees: Vec<SyntaxTree> = ["(S (A a) (B b))", "(S (A a) (A b))", "(S (A a) (C c))"]
            .iter()
            .map(|s| parse_tree(s).unwrap())
            .collect();
        // Counts: A->tok 4, S->A A 1, S->A B 1, S->A C 1, B->tok 1, C->tok 1.
        // Top 3 by count then string: A -> <TOKEN>, B -> <TOKEN>, C -> <TOKEN>.
        let res = filter_corpus(&trees, &BTreeSet::from([2]), 3, HeightMode::WithPos);
        assert!(res.kept.is_empty());
        // Top 4 adds "S -> A A".
        let res = filter_corpus(&trees, &BTreeSet::from([2]), 4, HeightMode::WithPos);
        assert_eq!(res.kept, vec![1]);
        assert_eq!(res.vocab.len(), 2);
    }
}
