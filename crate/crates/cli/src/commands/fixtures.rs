// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic inputs for every other subcommand.
//!
//! ```text
//! out/
//!   trees.ptb          one `id<TAB>tree` line per sentence
//!   pool3.ptb          the three-token pooling example
//!   manifest.json      embedding sets, attention bundles, caption pairs
//!   teacher/           the net that produced the sentence embeddings
//!   tensors/*.npy
//! ```

use std::path::{Path, PathBuf};

use anyhow::Result;
use syncomp::fixtures::{congruent_attention_layer, pooling_example, synthetic_trees, teacher_examples, vocabulary};
use syncomp::io::manifest::{
    AttentionBundleRecord, CaptionPair, CaptionPairSetRecord, EmbeddingSetRecord, LayerFiles, Record,
};
use syncomp::io::npy::save_tensor_as;
use syncomp::io::Manifest;
use syncomp::rng::SplitMix64;
use syncomp::synnamon::{build_net, save_net};
use syncomp::Tensor;

use super::Context;
use crate::cli::GenFixturesArgs;
use crate::corpus::{ensure_dir, write_text};
use crate::failure::Usage;

/// Seed offset separating the teacher's weights from a student built with
/// the run seed.
const TEACHER_SEED: u64 = 0x7EAC_4E12;

struct Writer<'a> {
    root: &'a Path,
    ctx: Context,
}

impl Writer<'_> {
    fn tensor(&self, name: &str, t: &Tensor) -> Result<PathBuf> {
        let rel = PathBuf::from("tensors").join(format!("{name}.npy"));
        save_tensor_as(self.root.join(&rel), t, self.ctx.dtype)?;
        Ok(rel)
    }
}

fn random_square(rng: &mut SplitMix64, n: usize) -> Result<Tensor> {
    Ok(Tensor::new(vec![n, n], (0..n * n).map(|_| rng.normal()).collect())?)
}

pub fn generate(args: &GenFixturesArgs, ctx: Context) -> Result<()> {
    if args.n_trees < 2 {
        return Err(Usage("--n-trees must be at least 2".into()).into());
    }
    if args.n_language == 0 {
        return Err(Usage("--n-language must be at least 1".into()).into());
    }
    ensure_dir(&args.out.join("tensors"))?;
    let w = Writer { root: &args.out, ctx };
    let mut records = Vec::new();

    let trees = synthetic_trees(args.n_trees, args.depth, ctx.seed);
    let teacher = build_net(
        &vocabulary(&trees),
        args.d,
        args.teacher_arch,
        None,
        ctx.seed ^ TEACHER_SEED,
    )?;
    save_net(&teacher, args.out.join("teacher"))?;
    let examples = teacher_examples(&trees, &teacher, ctx.seed)?;
    let mut lines = String::new();
    for (i, e) in examples.iter().enumerate() {
        let id = format!("s{i:04}");
        lines.push_str(&format!("{id}\t{}\n", e.tree.to_canonical()));
        records.push(Record::EmbeddingSet(EmbeddingSetRecord {
            id: id.clone(),
            tokens: e.tree.tokens().iter().map(|s| s.to_string()).collect(),
            token_embeddings: w.tensor(&format!("{id}_tokens"), &e.tokens)?,
            sentence_embedding: Some(w.tensor(&format!("{id}_sentence"), &e.target)?),
        }));
    }
    write_text(&args.out.join("trees.ptb"), &lines)?;

    let (tree, tokens) = pooling_example();
    write_text(
        &args.out.join("pool3.ptb"),
        &format!("pool3\t{}\n", tree.to_canonical()),
    )?;
    records.push(Record::EmbeddingSet(EmbeddingSetRecord {
        id: "pool3".into(),
        tokens: tree.tokens().iter().map(|s| s.to_string()).collect(),
        token_embeddings: w.tensor("pool3_tokens", &tokens)?,
        sentence_embedding: None,
    }));

    let mut rng = SplitMix64::keyed(ctx.seed, "gen-fixtures:attention");
    let n = args.n_language + args.n_vision;
    let names: Vec<String> = (0..args.n_language)
        .map(|i| format!("w{i}"))
        .chain((0..args.n_vision).map(|i| format!("r{i}")))
        .collect();
    for b in 0..args.bundles {
        let id = format!("b{b:03}");
        let layers = (0..args.layers)
            .map(|l| {
                Ok(LayerFiles::Full {
                    full: w.tensor(&format!("{id}_layer{l}"), &random_square(&mut rng, n)?)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        records.push(Record::AttentionBundle(AttentionBundleRecord {
            id,
            n_language: args.n_language,
            n_vision: args.n_vision,
            layers,
            normalized: false,
            tokens: Some(names.clone()),
        }));
    }
    let congruent = congruent_attention_layer(args.n_language, ctx.seed);
    records.push(Record::AttentionBundle(AttentionBundleRecord {
        id: "congruent".into(),
        n_language: args.n_language,
        n_vision: args.n_language,
        layers: vec![LayerFiles::Blocks {
            ll: w.tensor("congruent_ll", &congruent.ll)?,
            lv: w.tensor("congruent_lv", &congruent.lv)?,
            vl: w.tensor("congruent_vl", &congruent.vl)?,
            vv: w.tensor("congruent_vv", &congruent.vv)?,
        }],
        normalized: false,
        tokens: None,
    }));

    let pairs = (0..args.pairs.min(args.n_trees / 2))
        .map(|p| {
            let scores = Tensor::new(vec![2, 2], (0..4).map(|_| rng.normal()).collect())?;
            Ok(CaptionPair {
                caption0_id: format!("s{:04}", 2 * p),
                caption1_id: format!("s{:04}", 2 * p + 1),
                image0_id: format!("img{:04}", 2 * p),
                image1_id: format!("img{:04}", 2 * p + 1),
                scores: Some(w.tensor(&format!("pair{p:03}_scores"), &scores)?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if !pairs.is_empty() {
        records.push(Record::CaptionPairSet(CaptionPairSetRecord {
            id: "pairs".into(),
            pairs,
        }));
    }

    let manifest = Manifest {
        base: args.out.clone(),
        records,
    };
    manifest.save(args.out.join("manifest.json"))?;
    println!(
        "wrote {} trees, a {} teacher with {} modules, {} attention bundles and {} records to {}",
        examples.len(),
        teacher.arch,
        teacher.len(),
        args.bundles + 1,
        manifest.records.len(),
        args.out.display()
    );
    Ok(())
}
