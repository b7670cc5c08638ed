// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeSet;

use anyhow::Result;
use serde::Serialize;
use syncomp::ptb::filter_corpus;

use crate::cli::ParseTreesArgs;
use crate::corpus::{read_trees, write_json};

#[derive(Serialize)]
struct TreeRecord {
    index: usize,
    id: Option<String>,
    tree: String,
    tokens: Vec<String>,
    height: usize,
    productions: Vec<String>,
    kept: bool,
}

#[derive(Serialize)]
struct RuleCount {
    rule: String,
    count: usize,
}

#[derive(Serialize)]
struct Output {
    trees: Vec<TreeRecord>,
    kept: Vec<usize>,
    vocab: Vec<RuleCount>,
}

pub fn parse_trees(args: &ParseTreesArgs) -> Result<()> {
    let entries = read_trees(&args.input)?;
    let trees: Vec<_> = entries.iter().map(|e| e.tree.clone()).collect();
    let heights: BTreeSet<usize> = if args.heights.is_empty() {
        trees.iter().map(|t| t.height(args.height_mode)).collect()
    } else {
        args.heights.iter().copied().collect()
    };
    let result = filter_corpus(&trees, &heights, args.max_rules.unwrap_or(usize::MAX), args.height_mode);
    let kept: BTreeSet<usize> = result.kept.iter().copied().collect();
    let records = entries
        .iter()
        .enumerate()
        .map(|(index, e)| TreeRecord {
            index,
            id: e.id.clone(),
            tree: e.tree.to_canonical(),
            tokens: e.tree.tokens().iter().map(|s| s.to_string()).collect(),
            height: e.tree.height(args.height_mode),
            productions: e.tree.productions().iter().map(|r| r.to_string()).collect(),
            kept: kept.contains(&index),
        })
        .collect();
    let vocab = result
        .vocab
        .iter()
        .map(|(r, c)| RuleCount {
            rule: r.to_string(),
            count: *c,
        })
        .collect();
    write_json(
        &args.out,
        &Output {
            trees: records,
            kept: result.kept.clone(),
            vocab,
        },
    )?;
    println!(
        "parsed {} trees; kept {}; {} productions in the kept vocabulary",
        entries.len(),
        result.kept.len(),
        result.vocab.len()
    );
    if result.kept.is_empty() {
        log::warn!("no tree passed the height and rule filters");
    }
    Ok(())
}
