// SPDX-License-Identifier: MIT OR Apache-2.0

mod attention;
mod fixtures;
mod nets;
mod pool;
mod trees;

use anyhow::Result;
use syncomp::io::npy::Dtype;

use crate::cli::{Cli, Command};

/// Options shared by every subcommand.
#[derive(Debug, Clone, Copy)]
pub struct Context {
    pub seed: u64,
    pub dtype: Dtype,
}

pub fn run(cli: &Cli) -> Result<()> {
    let ctx = Context {
        seed: cli.seed,
        dtype: cli.precision.dtype(),
    };
    match &cli.command {
        Command::ParseTrees(a) => trees::parse_trees(a),
        Command::BuildNet(a) => nets::build(a, ctx),
        Command::Distill(a) => nets::distill(a, ctx),
        Command::EvalNet(a) => nets::eval(a),
        Command::Trace(a) => nets::trace(a, ctx),
        Command::Cacr(a) => attention::cacr(a),
        Command::CacrVerify(a) => attention::verify(a, ctx),
        Command::Attnflow(a) => attention::attnflow(a),
        Command::Pool(a) => pool::pool(a, ctx),
        Command::GenFixtures(a) => fixtures::generate(a, ctx),
        Command::Manual(a) => crate::manual::write(&a.out),
    }
}
