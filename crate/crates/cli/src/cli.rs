// SPDX-License-Identifier: MIT OR Apache-2.0

//! Command-line surface. Every option can also come from a `--config` file.

use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Serialize, Serializer};
use syncomp::cacr::LayerSelector;
use syncomp::cacr::OracleReduction;
use syncomp::io::npy::Dtype;
use syncomp::pooling::PoolStrategy;
use syncomp::ptb::HeightMode;
use syncomp::synnamon::Arch;

/// Parse with the library's own `FromStr` so spellings stay in one place.
pub fn parse_core<T>(s: &str) -> Result<T, String>
where
    T: FromStr<Err = syncomp::Error>,
{
    s.parse().map_err(|e: syncomp::Error| e.to_string())
}

fn display<T: Display, S: Serializer>(value: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(value)
}

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "syncomp",
    version,
    about = "Compositional structure in sentence representations: module nets, cross-modal attention congruence, syntactic pooling, attention flow and causal tracing.",
    propagate_version = true
)]
pub struct Cli {
    /// TOML file of option values; top-level keys set global options and a
    /// `[subcommand]` table sets that subcommand's options. Flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads [default: one per core]. 1 is the reference execution;
    /// results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    /// Element type of exported vectors and generated tensors.
    #[arg(long, global = true, value_enum, default_value_t = Precision::F64)]
    pub precision: Precision,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F64,
    F32,
}

impl Precision {
    pub fn dtype(self) -> Dtype {
        match self {
            Precision::F64 => Dtype::F64,
            Precision::F32 => Dtype::F32,
        }
    }
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Parse a bracketed tree corpus, filter it by height and rule
    /// frequency, and write trees, heights and productions as JSON.
    ParseTrees(ParseTreesArgs),
    /// Build a randomly initialized module net over a corpus's productions.
    BuildNet(BuildNetArgs),
    /// Distill teacher sentence embeddings into a module net.
    Distill(DistillArgs),
    /// Score a module net against teacher sentence embeddings.
    EvalNet(EvalNetArgs),
    /// Cross-modal congruence losses for attention bundles.
    Cacr(CacrArgs),
    /// Check the closed-form congruence projection against the brute-force
    /// oracle on random layers.
    CacrVerify(CacrVerifyArgs),
    /// Pool token embeddings into sentence vectors.
    Pool(PoolArgs),
    /// Significant attention edges as SVG and CSV.
    Attnflow(AttnflowArgs),
    /// Causal tracing over a module net's composition.
    Trace(TraceArgs),
    /// Write a synthetic corpus, teacher net and manifest.
    GenFixtures(GenFixturesArgs),
    /// Write the reference manual as Markdown.
    Manual(ManualArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::ParseTrees(_) => "parse-trees",
            Command::BuildNet(_) => "build-net",
            Command::Distill(_) => "distill",
            Command::EvalNet(_) => "eval-net",
            Command::Cacr(_) => "cacr",
            Command::CacrVerify(_) => "cacr-verify",
            Command::Pool(_) => "pool",
            Command::Attnflow(_) => "attnflow",
            Command::Trace(_) => "trace",
            Command::GenFixtures(_) => "gen-fixtures",
            Command::Manual(_) => "manual",
        }
    }
}

/// How trees are read from a corpus file.
#[derive(Debug, Args, Serialize)]
pub struct TreeInput {
    /// Corpus with one bracketed tree per line, optionally `id<TAB>tree`.
    #[arg(long, value_name = "FILE")]
    pub trees: PathBuf,

    /// Keep functional tags such as `NP-SBJ` instead of stripping them.
    #[arg(long)]
    pub keep_tags: bool,

    /// Keep `-NONE-` empty elements.
    #[arg(long)]
    pub keep_empty: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ParseTreesArgs {
    #[command(flatten)]
    pub input: TreeInput,

    /// Allowed tree heights, comma separated [default: every height].
    #[arg(long, value_delimiter = ',', value_name = "H,...")]
    pub heights: Vec<usize>,

    /// Keep only trees built from this many most frequent productions
    /// [default: unlimited].
    #[arg(long, value_name = "N")]
    pub max_rules: Option<usize>,

    /// Whether height counts the token edge below each part-of-speech tag.
    #[arg(long, default_value = "with-pos", value_parser = parse_core::<HeightMode>)]
    pub height_mode: HeightMode,

    /// Output JSON.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct NetShape {
    /// Module architecture: linear, nonlin or double.
    #[arg(long, default_value = "linear", value_parser = parse_core::<Arch>)]
    pub arch: Arch,

    /// Hidden width of double modules [default: the embedding width].
    #[arg(long, value_name = "H")]
    pub hidden: Option<usize>,

    /// Feed token embeddings straight to their parents instead of through
    /// per-tag modules.
    #[arg(long)]
    pub no_pos_modules: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct BuildNetArgs {
    #[command(flatten)]
    pub input: TreeInput,

    #[command(flatten)]
    pub shape: NetShape,

    /// Embedding width.
    #[arg(long, default_value_t = 16)]
    pub d: usize,

    /// Checkpoint directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FixtureSet {
    /// Random trees with targets from a random teacher net.
    Synthetic,
}

#[derive(Debug, Args, Serialize)]
pub struct DistillArgs {
    /// Built-in corpus to use instead of `--trees` and `--manifest`.
    #[arg(long, value_enum)]
    pub fixtures: Option<FixtureSet>,

    /// Corpus with one bracketed tree per line, optionally `id<TAB>tree`.
    #[arg(long, value_name = "FILE", required_unless_present = "fixtures")]
    pub trees: Option<PathBuf>,

    /// Manifest of embedding sets with sentence embeddings as targets.
    #[arg(long, value_name = "FILE", required_unless_present = "fixtures")]
    pub manifest: Option<PathBuf>,

    #[command(flatten)]
    pub shape: NetShape,

    /// Embedding width of the built-in corpus; exported data sets its own.
    #[arg(long, default_value_t = 16)]
    pub d: usize,

    /// Teacher architecture of the built-in corpus.
    #[arg(long, default_value = "linear", value_parser = parse_core::<Arch>)]
    pub teacher_arch: Arch,

    /// Trees in the built-in corpus.
    #[arg(long, default_value_t = 200)]
    pub n_trees: usize,

    /// Adam learning rate [default: 5e-5, or 1e-3 with --fixtures].
    #[arg(long)]
    pub lr: Option<f64>,

    /// Training epochs [default: 100, or 500 with --fixtures].
    #[arg(long)]
    pub epochs: Option<usize>,

    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,

    /// Share of trees held out for validation.
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,

    /// Output directory: report.json, curve.csv, split.json and net/.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalNetArgs {
    /// Checkpoint directory.
    #[arg(long, value_name = "DIR")]
    pub net: PathBuf,

    #[command(flatten)]
    pub input: TreeInput,

    /// Manifest of embedding sets with sentence embeddings.
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,

    /// Per-sentence CSV.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CacrArgs {
    /// Manifest of attention bundles.
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,

    /// Bundles to score, comma separated [default: all].
    #[arg(long, value_delimiter = ',', value_name = "ID,...")]
    pub id: Vec<String>,

    /// Layer to score: last, all, or a zero-based index.
    #[arg(long, default_value = "last", value_parser = parse_core::<LayerSelector>)]
    #[serde(serialize_with = "display")]
    pub layer: LayerSelector,

    /// Per-layer CSV.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    /// Accumulate weighted relations.
    Sum,
    /// Divide the sum by the squared size of the other modality.
    Mean,
}

impl Reduction {
    pub fn oracle(self) -> OracleReduction {
        match self {
            Reduction::Sum => OracleReduction::Sum,
            Reduction::Mean => OracleReduction::Mean,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct CacrVerifyArgs {
    /// Random layers to check.
    #[arg(long, default_value_t = 100)]
    pub trials: usize,

    /// Largest language or vision size drawn.
    #[arg(long, default_value_t = 8)]
    pub max_n: usize,

    /// Largest entrywise difference that passes.
    #[arg(long, default_value = "1e-9")]
    pub tolerance: f64,

    /// How the oracle reduces weighted relations.
    #[arg(long, value_enum, default_value_t = Reduction::Sum)]
    pub reduction: Reduction,

    /// Optional JSON with per-trial results.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PoolArgs {
    /// Pooling strategy: syn, mean or first.
    #[arg(long, default_value = "syn", value_parser = parse_core::<PoolStrategy>)]
    pub strategy: PoolStrategy,

    /// Corpus whose ids select and structure the sentences; required by
    /// `syn` [default: every embedding set].
    #[arg(long, value_name = "FILE")]
    pub trees: Option<PathBuf>,

    /// Manifest of embedding sets, plus caption pair sets for distances.
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,

    /// Index CSV. Vectors go to `<stem>_vectors/`, pair distances to
    /// `<stem>_distances.csv` and pair match scores to
    /// `<stem>_winoground.json`.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct AttnflowArgs {
    /// Manifest of attention bundles.
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,

    /// Bundle to draw.
    #[arg(long)]
    pub id: String,

    /// Threshold in standard deviations above each layer's mean.
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    pub k: f64,

    /// Row-softmax raw scores before thresholding.
    #[arg(long)]
    pub softmax: bool,

    /// SVG output.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,

    /// Optional CSV of edges.
    #[arg(long, value_name = "FILE")]
    pub edges: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TraceArgs {
    /// Checkpoint directory.
    #[arg(long, value_name = "DIR")]
    pub net: PathBuf,

    #[command(flatten)]
    pub input: TreeInput,

    /// Manifest with the sentences' token embeddings.
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,

    /// Sentence to trace [default: the first tree].
    #[arg(long)]
    pub id: Option<String>,

    /// Zero-based leaf positions to corrupt, comma separated.
    #[arg(long, value_delimiter = ',', required = true, value_name = "I,...")]
    pub corrupt_leaves: Vec<usize>,

    /// Noise standard deviation as a multiple of each corrupted leaf's own
    /// spread.
    #[arg(long, default_value_t = 1.0)]
    pub sigma_scale: f64,

    /// Fixed noise standard deviation; overrides `--sigma-scale`.
    #[arg(long)]
    pub sigma: Option<f64>,

    /// JSON report.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GenFixturesArgs {
    /// Trees in the synthetic corpus.
    #[arg(long, default_value_t = 200)]
    pub n_trees: usize,

    /// Embedding width.
    #[arg(long, default_value_t = 16)]
    pub d: usize,

    /// Recursion depth of the tree grammar.
    #[arg(long, default_value_t = 1)]
    pub depth: usize,

    /// Architecture of the teacher net producing sentence embeddings.
    #[arg(long, default_value = "linear", value_parser = parse_core::<Arch>)]
    pub teacher_arch: Arch,

    /// Random attention bundles.
    #[arg(long, default_value_t = 4)]
    pub bundles: usize,

    /// Layers per attention bundle.
    #[arg(long, default_value_t = 2)]
    pub layers: usize,

    /// Language tokens per attention bundle.
    #[arg(long, default_value_t = 4)]
    pub n_language: usize,

    /// Vision tokens per attention bundle.
    #[arg(long, default_value_t = 3)]
    pub n_vision: usize,

    /// Caption pairs with random match scores.
    #[arg(long, default_value_t = 4)]
    pub pairs: usize,

    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ManualArgs {
    /// Markdown output.
    #[arg(long, value_name = "FILE", default_value = "MANUAL.md")]
    pub out: PathBuf,
}
