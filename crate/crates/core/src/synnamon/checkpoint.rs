// SPDX-License-Identifier: MIT OR Apache-2.0

//! Net checkpoints: a directory with `index.json` and one `.npy` file per
//! parameter tensor.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Arch, Module, ModuleNet};
use crate::error::{Error, Result};
use crate::io::npy::{load_tensor, save_tensor};
use crate::ptb::ProductionRule;

#[derive(Debug, Serialize, Deserialize)]
struct Index {
    arch: Arch,
    dim: usize,
    hidden: usize,
    #[serde(default = "yes")]
    pos_modules: bool,
    modules: Vec<IndexEntry>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexEntry {
    rule: ProductionRule,
    params: Vec<String>,
}

const PARAM_NAMES: [&str; 4] = ["w1", "b1", "w2", "b2"];

pub fn save_net(net: &ModuleNet, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut modules = Vec::with_capacity(net.len());
    for (i, m) in net.modules.iter().enumerate() {
        let mut params = Vec::with_capacity(m.params.len());
        for (p, t) in m.params.iter().enumerate() {
            let name = format!("m{i:04}_{}.npy", PARAM_NAMES[p]);
            save_tensor(dir.join(&name), t)?;
            params.push(name);
        }
        modules.push(IndexEntry {
            rule: m.rule.clone(),
            params,
        });
    }
    let index = Index {
        arch: net.arch,
        dim: net.dim,
        hidden: net.hidden,
        pos_modules: net.pos_modules,
        modules,
    };
    let path = dir.join("index.json");
    let text = serde_json::to_string_pretty(&index).map_err(|e| Error::Json {
        path: path.clone(),
        source: e,
    })?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

pub fn load_net(dir: impl AsRef<Path>) -> Result<ModuleNet> {
    let dir = dir.as_ref();
    let path = dir.join("index.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let index: Index = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.clone(),
        source: e,
    })?;
    let modules = index
        .modules
        .into_iter()
        .map(|entry| {
            let params = entry
                .params
                .iter()
                .map(|name| load_tensor(dir.join(name)).map(|t| t.as_matrix()))
                .collect::<Result<Vec<_>>>()?;
            Ok(Module {
                rule: entry.rule,
                params,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut net = ModuleNet::from_modules(index.dim, index.hidden, index.arch, modules)?;
    net.pos_modules = index.pos_modules;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synnamon::build_net;

    #[test]
    fn round_trip() {
        let vocab: Vec<ProductionRule> = ["S -> NP VP", "NP -> DT NN", "DT -> <TOKEN>"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        for arch in [Arch::Linear, Arch::Double] {
            let mut net = build_net(&vocab, 3, arch, Some(2), 4).unwrap();
            net.pos_modules = false;
            let dir = tempfile::tempdir().unwrap();
            save_net(&net, dir.path()).unwrap();
            assert_eq!(load_net(dir.path()).unwrap(), net);
        }
    }

    #[test]
    fn missing_tensor_is_reported() {
        let vocab: Vec<ProductionRule> = vec!["S -> A".parse().unwrap()];
        let net = build_net(&vocab, 2, Arch::Linear, None, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_net(&net, dir.path()).unwrap();
        fs::remove_file(dir.path().join("m0000_b1.npy")).unwrap();
        assert!(matches!(load_net(dir.path()), Err(Error::Io { .. })));
    }
}
