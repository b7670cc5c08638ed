// SPDX-License-Identifier: MIT OR Apache-2.0

use std::time::Instant;

use anyhow::Result;
use serde::Serialize;
use syncomp::attnflow::{extract_flow, render_svg};
use syncomp::cacr::{cacr_record, operation_counts, project, soft_equivalence_oracle, AttentionLayer, Side};
use syncomp::io::Manifest;
use syncomp::rng::SplitMix64;
use syncomp::{tensor, Error, Tensor};

use super::Context;
use crate::cli::{AttnflowArgs, CacrArgs, CacrVerifyArgs, Reduction};
use crate::corpus::{csv_writer, write_json, write_text};
use crate::failure::{Numerical, Usage};

pub fn cacr(args: &CacrArgs) -> Result<()> {
    let manifest = Manifest::load(&args.manifest)?;
    let ids: Vec<String> = if args.id.is_empty() {
        manifest.ids("attention_bundle").into_iter().map(String::from).collect()
    } else {
        args.id.clone()
    };
    if ids.is_empty() {
        return Err(Error::Manifest("no attention bundles to score".into()).into());
    }
    let mut w = csv_writer(&args.out)?;
    let mut total = 0.0;
    let mut rows = 0;
    for id in &ids {
        let bundle = manifest.load_attention_bundle(id)?;
        for layer in bundle.select(args.layer)? {
            let record = cacr_record(id, layer, bundle.normalization())?;
            if !record.total.is_finite() {
                return Err(Error::NonFinite("congruence loss").into());
            }
            total += record.total;
            rows += 1;
            w.serialize(&record)?;
        }
    }
    w.flush()?;
    println!(
        "{} bundles, {rows} layers scored; mean total loss {:.6}",
        ids.len(),
        total / rows as f64
    );
    Ok(())
}

#[derive(Serialize)]
struct Trial {
    n_language: usize,
    n_vision: usize,
    max_abs_diff_language: f64,
    max_abs_diff_vision: f64,
    closed_form_ops: u64,
    oracle_ops: u64,
}

#[derive(Serialize)]
struct VerifyReport {
    trials: Vec<Trial>,
    max_abs_diff: f64,
    tolerance: f64,
    pass: bool,
}

fn max_abs_diff(a: &Tensor, b: &Tensor) -> Result<f64> {
    let d = tensor::sub(a, b)?;
    Ok(d.data().iter().fold(0.0_f64, |m, v| m.max(v.abs())))
}

pub fn verify(args: &CacrVerifyArgs, ctx: Context) -> Result<()> {
    if args.max_n == 0 {
        return Err(Usage("--max-n must be at least 1".into()).into());
    }
    let mut rng = SplitMix64::keyed(ctx.seed, "cacr-verify");
    let mut layers = Vec::with_capacity(args.trials);
    for _ in 0..args.trials {
        let n_l = 1 + rng.below(args.max_n);
        let n_v = 1 + rng.below(args.max_n);
        let n = n_l + n_v;
        let full = Tensor::new(vec![n, n], (0..n * n).map(|_| rng.uniform(-3.0, 3.0)).collect())?;
        layers.push(AttentionLayer::from_full(0, &full, n_l, n_v)?);
    }

    let start = Instant::now();
    let closed: Vec<[Tensor; 2]> = layers
        .iter()
        .map(|l| Ok([project(l, Side::Language)?, project(l, Side::Vision)?]))
        .collect::<Result<_>>()?;
    let closed_time = start.elapsed();
    let start = Instant::now();
    let oracle: Vec<[Tensor; 2]> = layers
        .iter()
        .map(|l| {
            Ok([
                soft_equivalence_oracle(l, Side::Language, args.reduction.oracle())?,
                soft_equivalence_oracle(l, Side::Vision, args.reduction.oracle())?,
            ])
        })
        .collect::<Result<_>>()?;
    let oracle_time = start.elapsed();

    let mut trials = Vec::with_capacity(layers.len());
    for ((layer, c), o) in layers.iter().zip(&closed).zip(&oracle) {
        let (cl, ol) = operation_counts(layer, Side::Language);
        let (cv, ov) = operation_counts(layer, Side::Vision);
        trials.push(Trial {
            n_language: layer.n_language(),
            n_vision: layer.n_vision(),
            max_abs_diff_language: max_abs_diff(&c[0], &o[0])?,
            max_abs_diff_vision: max_abs_diff(&c[1], &o[1])?,
            closed_form_ops: cl + cv,
            oracle_ops: ol + ov,
        });
    }
    let worst = trials
        .iter()
        .map(|t| t.max_abs_diff_language.max(t.max_abs_diff_vision))
        .fold(0.0_f64, f64::max);
    if trials
        .iter()
        .any(|t| t.max_abs_diff_language.is_nan() || t.max_abs_diff_vision.is_nan())
    {
        return Err(Error::NonFinite("projection").into());
    }
    let pass = worst < args.tolerance;
    let closed_ops: u64 = trials.iter().map(|t| t.closed_form_ops).sum();
    let oracle_ops: u64 = trials.iter().map(|t| t.oracle_ops).sum();
    if let Some(out) = &args.out {
        write_json(
            out,
            &VerifyReport {
                trials,
                max_abs_diff: worst,
                tolerance: args.tolerance,
                pass,
            },
        )?;
    }
    let reduction = match args.reduction {
        Reduction::Sum => "sum",
        Reduction::Mean => "mean",
    };
    println!("trials: {}  max n: {}  reduction: {reduction}", args.trials, args.max_n);
    println!("max |closed - oracle| = {worst:.3e}");
    println!(
        "multiply-adds: closed form {closed_ops}, oracle {oracle_ops} ({:.1}x)",
        oracle_ops as f64 / closed_ops.max(1) as f64
    );
    println!(
        "wall clock: closed form {:.3} ms, oracle {:.3} ms",
        closed_time.as_secs_f64() * 1e3,
        oracle_time.as_secs_f64() * 1e3
    );
    if pass {
        println!("PASS (tolerance {:e})", args.tolerance);
        Ok(())
    } else {
        println!("FAIL (tolerance {:e})", args.tolerance);
        Err(Numerical(format!("closed form and oracle differ by {worst:.3e}")).into())
    }
}

#[derive(Serialize)]
struct EdgeRow<'a> {
    layer: usize,
    source: usize,
    source_token: &'a str,
    target: usize,
    target_token: &'a str,
    weight: f64,
    z: f64,
}

pub fn attnflow(args: &AttnflowArgs) -> Result<()> {
    let manifest = Manifest::load(&args.manifest)?;
    let bundle = manifest.load_attention_bundle(&args.id)?;
    let n = bundle.n_language + bundle.n_vision;
    let tokens: Vec<String> = match &bundle.tokens {
        Some(t) => t.clone(),
        None => (0..bundle.n_language)
            .map(|i| format!("l{i}"))
            .chain((0..bundle.n_vision).map(|i| format!("v{i}")))
            .collect(),
    };
    let layers: Vec<Tensor> = bundle
        .layers
        .iter()
        .map(|l| {
            let full = l.full();
            if args.softmax {
                tensor::row_softmax(&full)
            } else {
                full
            }
        })
        .collect();
    if layers.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite("attention weights").into());
    }
    let edges = extract_flow(&layers, args.k)?;
    write_text(&args.out, &render_svg(&edges, &tokens, layers.len())?)?;
    if let Some(path) = &args.edges {
        let mut w = csv_writer(path)?;
        for e in &edges {
            w.serialize(EdgeRow {
                layer: e.layer,
                source: e.source,
                source_token: &tokens[e.source],
                target: e.target,
                target_token: &tokens[e.target],
                weight: e.weight,
                z: e.z,
            })?;
        }
        w.flush()?;
    }
    println!(
        "{}: {} layers over {n} tokens, {} edges above mean + {}·sd",
        bundle.id,
        layers.len(),
        edges.len(),
        args.k
    );
    Ok(())
}
