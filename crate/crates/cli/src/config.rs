// SPDX-License-Identifier: MIT OR Apache-2.0

//! Merging a TOML config file into the command line.
//!
//! The arguments are parsed once to find `--config` and the subcommand.
//! Each config key then becomes the matching flag, unless that flag was
//! given on the command line, and the result is parsed again.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::parser::ValueSource;
use clap::{ArgAction, ArgMatches, CommandFactory, FromArgMatches};

use crate::cli::Cli;

pub enum ResolveError {
    Clap(clap::Error),
    Config(String),
}

impl From<clap::Error> for ResolveError {
    fn from(e: clap::Error) -> Self {
        ResolveError::Clap(e)
    }
}

const RESERVED: [&str; 3] = ["config", "help", "version"];

pub fn resolve(argv: Vec<OsString>) -> Result<Cli, ResolveError> {
    let command = Cli::command();
    let first = match command.clone().try_get_matches_from(&argv) {
        Ok(m) => m,
        // The missing option may be in the config file.
        Err(e) if e.kind() == ErrorKind::MissingRequiredArgument => {
            match command.clone().ignore_errors(true).try_get_matches_from(&argv) {
                Ok(m) if m.get_one::<PathBuf>("config").is_some() => m,
                _ => return Err(e.into()),
            }
        }
        Err(e) => return Err(e.into()),
    };
    let Some(path) = first.get_one::<PathBuf>("config") else {
        return Ok(Cli::from_arg_matches(&first)?);
    };
    let text = fs::read_to_string(path)
        .map_err(|e| ResolveError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| ResolveError::Config(format!("config {}: {e}", path.display())))?;
    let (name, sub_matches) = first.subcommand().expect("a subcommand is required");

    let mut globals = Vec::new();
    let mut locals = Vec::new();
    for (key, value) in &table {
        match value {
            toml::Value::Table(section) => {
                let Some(sub) = command.find_subcommand(key.as_str()) else {
                    return Err(ResolveError::Config(format!("unknown config section [{key}]")));
                };
                let matches = (key == name).then_some(sub_matches);
                for (k, v) in section {
                    let flags =
                        to_flags(sub, matches, k, v).map_err(|e| ResolveError::Config(format!("[{key}] {e}")))?;
                    locals.extend(flags);
                }
            }
            v => globals.extend(to_flags(&command, Some(&first), key, v).map_err(ResolveError::Config)?),
        }
    }

    let at = argv
        .iter()
        .skip(1)
        .position(|a| a.to_str() == Some(name))
        .map(|p| p + 1)
        .expect("subcommand appears in the arguments");
    let mut merged = Vec::with_capacity(argv.len() + globals.len() + locals.len());
    merged.push(argv[0].clone());
    merged.extend(globals);
    merged.extend_from_slice(&argv[1..=at]);
    merged.extend(locals);
    merged.extend_from_slice(&argv[at + 1..]);
    let matches = command.try_get_matches_from(merged)?;
    Ok(Cli::from_arg_matches(&matches)?)
}

/// Flags for one key. Checks the key against `command` either way; only
/// emits flags when `matches` is given and the option was not already set
/// on the command line.
fn to_flags(
    command: &clap::Command,
    matches: Option<&ArgMatches>,
    key: &str,
    value: &toml::Value,
) -> Result<Vec<OsString>, String> {
    let long = key.replace('_', "-");
    let arg = command
        .get_arguments()
        .find(|a| a.get_long() == Some(long.as_str()) && !RESERVED.contains(&long.as_str()))
        .ok_or_else(|| format!("unknown option {key:?}"))?;
    let Some(matches) = matches else {
        return Ok(Vec::new());
    };
    if matches.value_source(arg.get_id().as_str()) == Some(ValueSource::CommandLine) {
        return Ok(Vec::new());
    }
    let flag = OsString::from(format!("--{long}"));
    if matches!(arg.get_action(), ArgAction::SetTrue) {
        return match value {
            toml::Value::Boolean(true) => Ok(vec![flag]),
            toml::Value::Boolean(false) => Ok(Vec::new()),
            other => Err(format!("option {key:?} expects true or false, got {other}")),
        };
    }
    let text = match value {
        toml::Value::Array(items) => items.iter().map(scalar).collect::<Result<Vec<_>, _>>()?.join(","),
        v => scalar(v)?,
    };
    Ok(vec![flag, OsString::from(text)])
}

fn scalar(value: &toml::Value) -> Result<String, String> {
    match value {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        toml::Value::Boolean(b) => Ok(b.to_string()),
        other => Err(format!("unsupported value {other}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::Command;

    fn args(list: &[&str]) -> Vec<OsString> {
        list.iter().map(OsString::from).collect()
    }

    fn config(text: &str) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        fs::write(f.path(), text).unwrap();
        f
    }

    #[test]
    fn file_fills_unset_options_and_flags_win() {
        let f = config("seed = 9\n[cacr-verify]\ntrials = 5\nmax_n = 3\n");
        let path = f.path().to_str().unwrap();
        let Ok(cli) = resolve(args(&["syncomp", "--config", path, "cacr-verify", "--max-n", "4"])) else {
            panic!("resolve failed");
        };
        assert_eq!(cli.seed, 9);
        let Command::CacrVerify(a) = cli.command else { panic!() };
        assert_eq!((a.trials, a.max_n), (5, 4));
    }

    #[test]
    fn booleans_and_lists() {
        let f = config("[trace]\ncorrupt_leaves = [0, 2]\nkeep_tags = true\nkeep_empty = false\n");
        let path = f.path().to_str().unwrap();
        let argv = args(&[
            "syncomp",
            "trace",
            "--config",
            path,
            "--net",
            "n",
            "--trees",
            "t",
            "--manifest",
            "m",
            "--out",
            "o",
        ]);
        let Ok(cli) = resolve(argv) else {
            panic!("resolve failed")
        };
        let Command::Trace(a) = cli.command else { panic!() };
        assert_eq!(a.corrupt_leaves, vec![0, 2]);
        assert!(a.input.keep_tags);
        assert!(!a.input.keep_empty);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        for text in [
            "bogus = 1\n",
            "[cacr-verify]\nbogus = 1\n",
            "[nothing]\na = 1\n",
            "[trace]\nbogus = 1\n",
        ] {
            let f = config(text);
            let path = f.path().to_str().unwrap();
            assert!(matches!(
                resolve(args(&["syncomp", "--config", path, "cacr-verify"])),
                Err(ResolveError::Config(_))
            ));
        }
    }
}
