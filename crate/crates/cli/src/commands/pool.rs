// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::Serialize;
use syncomp::io::npy::{load_tensor, save_tensor_as};
use syncomp::io::Manifest;
use syncomp::pooling::{euclidean, pool as pool_set, winoground_scores, PairScores, PoolStrategy, WinogroundScores};
use syncomp::{Error, Tensor};

use super::Context;
use crate::cli::PoolArgs;
use crate::corpus::{csv_writer, ensure_dir, read_tree_file, sentences, write_json};
use crate::failure::Usage;

#[derive(Serialize)]
struct IndexRow<'a> {
    id: &'a str,
    strategy: String,
    dim: usize,
    vector_file: String,
}

#[derive(Serialize)]
struct DistanceRow<'a> {
    set: &'a str,
    caption0_id: &'a str,
    caption1_id: &'a str,
    euclidean: f64,
}

#[derive(Serialize)]
struct PairSetScores<'a> {
    set: &'a str,
    pairs: usize,
    scores: WinogroundScores,
}

/// `dir/name` with the file stem of `out` plus `suffix`.
fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}{suffix}"))
}

fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn pool(args: &PoolArgs, ctx: Context) -> Result<()> {
    let manifest = Manifest::load(&args.manifest)?;
    let pooled: Vec<(String, Tensor)> = match &args.trees {
        Some(trees) => sentences(read_tree_file(trees, false, false)?, &manifest)?
            .into_iter()
            .map(|s| Ok((s.id, pool_set(args.strategy, &s.set, Some(&s.tree))?)))
            .collect::<Result<_>>()?,
        None if args.strategy == PoolStrategy::Syn => {
            return Err(Usage("--strategy syn needs --trees".into()).into());
        }
        None => manifest
            .embedding_sets()?
            .into_iter()
            .map(|s| Ok((s.id.clone(), pool_set(args.strategy, &s, None)?)))
            .collect::<Result<_>>()?,
    };
    if pooled.iter().any(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite("pooled vector").into());
    }

    let vectors_dir = sibling(&args.out, "_vectors");
    ensure_dir(&vectors_dir)?;
    let dir_name = vectors_dir
        .file_name()
        .expect("named directory")
        .to_string_lossy()
        .into_owned();
    let mut index = csv_writer(&args.out)?;
    for (id, v) in &pooled {
        let name = format!("{}.{}.npy", file_safe(id), args.strategy);
        save_tensor_as(vectors_dir.join(&name), v, ctx.dtype)?;
        index.serialize(IndexRow {
            id,
            strategy: args.strategy.to_string(),
            dim: v.len(),
            vector_file: format!("{dir_name}/{name}"),
        })?;
    }
    index.flush()?;
    println!("pooled {} sentence(s) with {} pooling", pooled.len(), args.strategy);
    if pooled.len() == 1 {
        let values: Vec<String> = pooled[0].1.data().iter().map(|x| format!("{x}")).collect();
        println!("{}: [{}]", pooled[0].0, values.join(", "));
    }

    let sets = manifest.caption_pair_sets();
    if sets.is_empty() {
        return Ok(());
    }
    let by_id: BTreeMap<&str, &Tensor> = pooled.iter().map(|(id, v)| (id.as_str(), v)).collect();
    let mut distances = Vec::new();
    let mut summaries = Vec::new();
    for set in &sets {
        for p in &set.pairs {
            if let (Some(a), Some(b)) = (by_id.get(p.caption0_id.as_str()), by_id.get(p.caption1_id.as_str())) {
                distances.push(DistanceRow {
                    set: &set.id,
                    caption0_id: &p.caption0_id,
                    caption1_id: &p.caption1_id,
                    euclidean: euclidean(a.data(), b.data())?,
                });
            }
        }
        let scored: Option<Vec<PairScores>> = set
            .pairs
            .iter()
            .map(|p| {
                p.scores
                    .as_ref()
                    .map(|f| load_tensor(manifest.resolve(f)).and_then(|t| PairScores::from_tensor(&t.as_matrix())))
            })
            .collect::<Option<Result<_, _>>>()
            .transpose()?;
        if let Some(scored) = scored.filter(|s| !s.is_empty()) {
            let scores = winoground_scores(&scored)?;
            println!(
                "pair set {:?}: text {:.1}, image {:.1}, group {:.1}",
                set.id, scores.text, scores.image, scores.group
            );
            summaries.push(PairSetScores {
                set: &set.id,
                pairs: scored.len(),
                scores,
            });
        }
    }
    println!("{} caption pairs with both captions pooled", distances.len());
    if !distances.is_empty() {
        let mut w = csv_writer(&sibling(&args.out, "_distances.csv"))?;
        for row in &distances {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    if !summaries.is_empty() {
        write_json(&sibling(&args.out, "_winoground.json"), &summaries)?;
    }
    Ok(())
}
