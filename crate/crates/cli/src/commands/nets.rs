// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeSet;

use anyhow::{Context as _, Result};
use serde::Serialize;
use syncomp::fixtures::{teacher_corpus, vocabulary};
use syncomp::io::Manifest;
use syncomp::ptb::{ProductionRule, SyntaxTree};
use syncomp::synnamon::{
    build_net, chance_mse, distill as run_distill, load_net, make_split, save_net, DistillConfig, Example, ModuleNet,
};
use syncomp::tracing::{trace as run_trace, NoiseScale, TraceConfig};
use syncomp::{tensor, Error, Tensor};

use super::Context;
use crate::cli::{BuildNetArgs, DistillArgs, EvalNetArgs, NetShape, TraceArgs};
use crate::corpus::{csv_writer, read_tree_file, read_trees, sentences, write_json};
use crate::failure::Usage;

fn net_for(trees: &[&SyntaxTree], dim: usize, shape: &NetShape, seed: u64) -> Result<ModuleNet> {
    let mut vocab: Vec<ProductionRule> = vocabulary(trees.iter().copied());
    if shape.no_pos_modules {
        vocab.retain(|r| !r.is_lexical());
    }
    let mut net = build_net(&vocab, dim, shape.arch, shape.hidden, seed)?;
    net.pos_modules = !shape.no_pos_modules;
    Ok(net)
}

pub fn build(args: &BuildNetArgs, ctx: Context) -> Result<()> {
    let entries = read_trees(&args.input)?;
    let trees: Vec<&SyntaxTree> = entries.iter().map(|e| &e.tree).collect();
    let net = net_for(&trees, args.d, &args.shape, ctx.seed)?;
    save_net(&net, &args.out)?;
    println!(
        "built {} net: {} modules, {} parameters, D={}",
        net.arch,
        net.len(),
        net.param_count(),
        net.dim
    );
    Ok(())
}

fn examples_from_files(trees: &std::path::Path, manifest: &std::path::Path) -> Result<Vec<Example>> {
    let manifest = Manifest::load(manifest)?;
    let entries = read_tree_file(trees, false, false)?;
    sentences(entries, &manifest)?
        .into_iter()
        .map(|s| {
            let target = s
                .set
                .sentence_embedding
                .clone()
                .ok_or_else(|| Error::Manifest(format!("embedding set {:?} has no sentence embedding", s.id)))?;
            Ok(Example {
                tree: s.tree,
                tokens: s.set.token_embeddings,
                target,
            })
        })
        .collect()
}

pub fn distill(args: &DistillArgs, ctx: Context) -> Result<()> {
    let synthetic = args.fixtures.is_some();
    let examples = if synthetic {
        teacher_corpus(args.n_trees, args.d, args.teacher_arch, ctx.seed)?.examples
    } else {
        let (Some(trees), Some(manifest)) = (&args.trees, &args.manifest) else {
            return Err(Usage("distill needs --trees and --manifest, or --fixtures".into()).into());
        };
        examples_from_files(trees, manifest)?
    };
    let dim = examples
        .first()
        .map(|e| e.target.len())
        .ok_or(Error::EmptySplit("train"))?;
    let trees: Vec<&SyntaxTree> = examples.iter().map(|e| &e.tree).collect();
    let split = make_split(&trees, args.val_fraction, ctx.seed)?;
    let mut net = net_for(&trees, dim, &args.shape, ctx.seed)?;
    let config = DistillConfig {
        lr: args.lr.unwrap_or(if synthetic { 1e-3 } else { 5e-5 }),
        epochs: args.epochs.unwrap_or(if synthetic { 500 } else { 100 }),
        batch_size: args.batch_size,
        seed: ctx.seed,
    };
    log::info!(
        "distilling {} train / {} val trees into {} modules (lr {}, {} epochs)",
        split.train.len(),
        split.val.len(),
        net.len(),
        config.lr,
        config.epochs
    );
    let report = run_distill(&mut net, &examples, &split, &config)?;

    write_json(&args.out.join("report.json"), &report)?;
    write_json(&args.out.join("split.json"), &split)?;
    let mut curve = csv_writer(&args.out.join("curve.csv"))?;
    curve.write_record(["epoch", "train_mse", "val_mse", "normalized"])?;
    for (epoch, train, val, normalized) in report.curve_rows() {
        curve.serialize((epoch, train, val, normalized))?;
    }
    curve.flush()?;
    save_net(&net, args.out.join("net"))?;

    println!(
        "best epoch {} of {}: val MSE {:.6e}, chance MSE {:.6e}, normalized score {:.6}",
        report.best_epoch,
        report.epochs.len(),
        report.best_val_mse,
        report.chance_mse,
        report.normalized_score
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalRow<'a> {
    id: &'a str,
    mse: f64,
}

pub fn eval(args: &EvalNetArgs) -> Result<()> {
    let net = load_net(&args.net)?;
    let manifest = Manifest::load(&args.manifest)?;
    let data = sentences(read_trees(&args.input)?, &manifest)?;
    let mut rows = Vec::with_capacity(data.len());
    let mut targets = Vec::with_capacity(data.len());
    for s in &data {
        let target = s
            .set
            .sentence_embedding
            .as_ref()
            .ok_or_else(|| Error::Manifest(format!("embedding set {:?} has no sentence embedding", s.id)))?;
        let out = net
            .compose(&s.tree, &s.set.token_embeddings)
            .with_context(|| format!("sentence {:?}", s.id))?;
        let mse = tensor::mse(&out, target)?;
        if !mse.is_finite() {
            return Err(Error::NonFinite("net output").into());
        }
        rows.push(EvalRow { id: &s.id, mse });
        targets.push(target);
    }
    let mut w = csv_writer(&args.out)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let mean = rows.iter().map(|r| r.mse).sum::<f64>() / rows.len() as f64;
    match chance_mse(&targets) {
        Ok(chance) if chance > 0.0 => println!(
            "{} sentences: mean MSE {mean:.6e}, chance MSE {chance:.6e}, normalized {:.6}",
            rows.len(),
            mean / chance
        ),
        _ => println!("{} sentences: mean MSE {mean:.6e}", rows.len()),
    }
    Ok(())
}

pub fn trace(args: &TraceArgs, ctx: Context) -> Result<()> {
    let net = load_net(&args.net)?;
    let manifest = Manifest::load(&args.manifest)?;
    let data = sentences(read_trees(&args.input)?, &manifest)?;
    let sentence = match &args.id {
        Some(id) => data
            .iter()
            .find(|s| &s.id == id)
            .ok_or_else(|| Error::Manifest(format!("no tree with id {id:?}")))?,
        None => &data[0],
    };
    let noise = match args.sigma {
        Some(s) => NoiseScale::Absolute(s),
        None => NoiseScale::Relative(args.sigma_scale),
    };
    let config = TraceConfig {
        corrupt_leaves: args.corrupt_leaves.iter().copied().collect::<BTreeSet<usize>>(),
        noise,
        seed: ctx.seed,
    };
    let tokens: &Tensor = &sentence.set.token_embeddings;
    let report =
        run_trace(&net, &sentence.tree, tokens, &config).with_context(|| format!("sentence {:?}", sentence.id))?;
    if report.nodes.iter().any(|n| n.restoration.is_nan()) {
        return Err(Error::NonFinite("restoration score").into());
    }
    write_json(&args.out, &report)?;
    println!(
        "{} (corrupted leaves {:?}, d_corr {:.6e})",
        sentence.id, report.corrupt_leaves, report.d_corrupted
    );
    for n in &report.nodes {
        println!(
            "  node {:>3} {:<8} leaves {:>2}..{:<2} restoration {:>10.6}",
            n.node,
            n.label,
            n.first_leaf,
            n.first_leaf + n.leaf_count,
            n.restoration
        );
    }
    Ok(())
}
