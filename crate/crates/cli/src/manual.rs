// SPDX-License-Identifier: MIT OR Apache-2.0

//! Markdown reference generated from the argument definitions.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Result;
use clap::{Arg, ArgAction, Command, CommandFactory};

use crate::cli::Cli;
use crate::corpus::write_text;

const PREAMBLE: &str = "\
Every subcommand reads its inputs from files named on the command line,
writes machine-readable results (JSON, CSV, SVG or NPY) to `--out`, prints a
short human summary to standard output and logs to standard error. Runs are
deterministic: the same inputs, options and `--seed` give byte-identical
output files regardless of `--threads`.

## Configuration files

`--config FILE` reads a TOML file. Top-level keys set global options and a
table named after a subcommand sets that subcommand's options. Keys are
option names with either `-` or `_`. Options given on the command line take
precedence; unknown keys are rejected.

```toml
seed = 7
threads = 1

[distill]
arch = \"double\"
epochs = 300
lr = 1e-3

[trace]
corrupt_leaves = [0, 1]
```

The fully resolved configuration is logged at the start of every run.
Set `RUST_LOG=debug` for per-epoch training logs.

## Exit codes

| code | meaning |
|------|---------|
| 0 | success |
| 1 | invalid options or configuration |
| 2 | missing, malformed or inconsistent input data |
| 3 | numerical failure: a NaN or infinity, or a failed numerical check |

## Input formats

* Tree corpora: UTF-8, one bracketed tree per line, optionally prefixed by an
  id and a tab. Blank lines are skipped. Trees are matched to embedding sets
  by id when every line has one, otherwise by position.
* Tensors: NPY version 1 to 3, little-endian `f4` or `f8`, C order, rank 1
  or 2.
* Manifests: a JSON record or array of records tagged by `kind`:
  `embedding_set`, `attention_bundle` or `caption_pair_set`. Tensor paths
  are relative to the manifest's directory. Attention scores are raw
  pre-softmax values unless the bundle sets `\"normalized\": true`.
";

fn flag(arg: &Arg) -> String {
    let mut s = match (arg.get_long(), arg.get_short()) {
        (Some(l), _) => format!("--{l}"),
        (None, Some(c)) => format!("-{c}"),
        (None, None) => format!("<{}>", arg.get_id()),
    };
    if arg.get_action().takes_values() && !matches!(arg.get_action(), ArgAction::SetTrue) {
        let names = arg
            .get_value_names()
            .map(|v| v.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" "))
            .unwrap_or_else(|| arg.get_id().as_str().to_uppercase().replace('-', "_"));
        s.push_str(&format!(" <{names}>"));
    }
    s
}

fn describe(arg: &Arg) -> String {
    let mut text = arg
        .get_long_help()
        .or_else(|| arg.get_help())
        .map(|h| h.to_string().replace('\n', " "))
        .unwrap_or_default();
    if !text.is_empty() && !text.ends_with(['.', ']', ')']) {
        text.push('.');
    }
    let values: Vec<String> = arg
        .get_possible_values()
        .iter()
        .filter(|v| !v.is_hide_set())
        .map(|v| format!("`{}`", v.get_name()))
        .collect();
    if !values.is_empty() && !matches!(arg.get_action(), ArgAction::SetTrue) {
        let _ = write!(text, " One of {}.", values.join(", "));
    }
    let defaults: Vec<String> = arg
        .get_default_values()
        .iter()
        .map(|d| d.to_string_lossy().into_owned())
        .collect();
    if !defaults.is_empty() && !matches!(arg.get_action(), ArgAction::SetTrue) {
        let _ = write!(text, " Default `{}`.", defaults.join(","));
    }
    if arg.is_required_set() {
        text.push_str(" Required.");
    }
    text.replace('|', "\\|").trim().to_string()
}

fn options_table(out: &mut String, args: Vec<&Arg>) {
    out.push_str("| option | description |\n|---|---|\n");
    for a in args {
        let _ = writeln!(out, "| `{}` | {} |", flag(a), describe(a));
    }
    out.push('\n');
}

fn visible(cmd: &Command) -> Vec<&Arg> {
    cmd.get_arguments()
        .filter(|a| !a.is_hide_set() && !matches!(a.get_id().as_str(), "help" | "version"))
        .collect()
}

pub fn render() -> String {
    let mut cmd = Cli::command();
    cmd.build();
    let mut out = String::new();
    let _ = writeln!(out, "# {} manual\n", cmd.get_name());
    if let Some(about) = cmd.get_about() {
        let _ = writeln!(out, "{about}\n");
    }
    out.push_str(PREAMBLE);
    out.push_str("\n## Global options\n\nAccepted before or after the subcommand.\n\n");
    options_table(
        &mut out,
        visible(&cmd).into_iter().filter(|a| a.is_global_set()).collect(),
    );
    out.push_str("## Subcommands\n\n");
    for sub in cmd.get_subcommands().filter(|s| s.get_name() != "help") {
        let _ = writeln!(out, "### `{} {}`\n", cmd.get_name(), sub.get_name());
        if let Some(about) = sub.get_long_about().or_else(|| sub.get_about()) {
            let _ = writeln!(out, "{about}\n");
        }
        options_table(
            &mut out,
            visible(sub).into_iter().filter(|a| !a.is_global_set()).collect(),
        );
    }
    out
}

pub fn write(path: &Path) -> Result<()> {
    write_text(path, &render())?;
    println!("wrote {}", path.display());
    Ok(())
}
