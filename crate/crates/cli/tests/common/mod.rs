// SPDX-License-Identifier: MIT OR Apache-2.0

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn syncomp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_syncomp"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

/// Run and require exit code 0; returns stdout.
pub fn ok(args: &[&str]) -> String {
    let out = syncomp(args);
    assert!(
        out.status.success(),
        "syncomp {args:?} failed with {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 stdout")
}

pub fn code(args: &[&str]) -> i32 {
    syncomp(args).status.code().expect("exited normally")
}

/// Every file under `root` by relative path.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in fs::read_dir(dir).expect("readable dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).expect("under root").to_path_buf();
                out.insert(rel, fs::read(&path).expect("readable file"));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Argument lists of one run of every subcommand over fixtures in `fx`,
/// writing under `out`. `manual` is covered separately.
pub fn every_subcommand(fx: &Path, out: &Path) -> Vec<Vec<String>> {
    let f = |name: &str| s(&fx.join(name)).to_string();
    let o = |name: &str| s(&out.join(name)).to_string();
    let v = |items: &[&str]| items.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let (trees, manifest, teacher) = (f("trees.ptb"), f("manifest.json"), f("teacher"));
    vec![
        v(&["gen-fixtures", "--n-trees", "40", "--d", "6", "--out", &o("gen")]),
        v(&[
            "parse-trees",
            "--trees",
            &trees,
            "--heights",
            "3,4",
            "--max-rules",
            "12",
            "--out",
            &o("trees.json"),
        ]),
        v(&[
            "build-net",
            "--trees",
            &trees,
            "--d",
            "6",
            "--arch",
            "double",
            "--out",
            &o("net"),
        ]),
        v(&[
            "distill",
            "--trees",
            &trees,
            "--manifest",
            &manifest,
            "--arch",
            "nonlin",
            "--lr",
            "1e-3",
            "--epochs",
            "5",
            "--out",
            &o("distill"),
        ]),
        v(&[
            "distill",
            "--fixtures",
            "synthetic",
            "--n-trees",
            "40",
            "--d",
            "6",
            "--epochs",
            "5",
            "--out",
            &o("distill-synthetic"),
        ]),
        v(&[
            "eval-net",
            "--net",
            &teacher,
            "--trees",
            &trees,
            "--manifest",
            &manifest,
            "--out",
            &o("eval.csv"),
        ]),
        v(&[
            "cacr",
            "--manifest",
            &manifest,
            "--layer",
            "all",
            "--out",
            &o("cacr.csv"),
        ]),
        v(&[
            "cacr-verify",
            "--trials",
            "30",
            "--max-n",
            "5",
            "--out",
            &o("verify.json"),
        ]),
        v(&[
            "pool",
            "--strategy",
            "syn",
            "--trees",
            &trees,
            "--manifest",
            &manifest,
            "--out",
            &o("pool/syn.csv"),
        ]),
        v(&[
            "pool",
            "--strategy",
            "mean",
            "--manifest",
            &manifest,
            "--out",
            &o("pool/mean.csv"),
        ]),
        v(&[
            "attnflow",
            "--manifest",
            &manifest,
            "--id",
            "b000",
            "--k",
            "1.0",
            "--out",
            &o("flow.svg"),
            "--edges",
            &o("flow.csv"),
        ]),
        v(&[
            "trace",
            "--net",
            &teacher,
            "--trees",
            &trees,
            "--manifest",
            &manifest,
            "--id",
            "s0003",
            "--corrupt-leaves",
            "0,1",
            "--out",
            &o("trace.json"),
        ]),
    ]
}
