// SPDX-License-Identifier: MIT OR Apache-2.0

//! `syncomp`: one executable for every pipeline in the library.

mod cli;
mod commands;
mod config;
mod corpus;
mod failure;
mod manual;

use std::process::ExitCode;

use config::ResolveError;

fn main() -> ExitCode {
    let cli = match config::resolve(std::env::args_os().collect()) {
        Ok(cli) => cli,
        Err(ResolveError::Clap(e)) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
        Err(ResolveError::Config(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .format_target(false)
        .init();
    log::info!(
        "{} resolved config: {}",
        cli.command.name(),
        serde_json::to_string(&cli).expect("options serialize")
    );

    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(1);
        }
    }

    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(failure::exit_code(&e))
        }
    }
}
