// SPDX-License-Identifier: MIT OR Apache-2.0

//! Reading tree corpora, matching them to embedding sets, writing outputs.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use syncomp::io::Manifest;
use syncomp::pooling::EmbeddingSet;
use syncomp::ptb::{parse_corpus, CorpusEntry, ParseOptions, SyntaxTree};
use syncomp::Error;

use crate::cli::TreeInput;

pub fn read_trees(input: &TreeInput) -> Result<Vec<CorpusEntry>> {
    read_tree_file(&input.trees, input.keep_tags, input.keep_empty)
}

pub fn read_tree_file(path: &Path, keep_tags: bool, keep_empty: bool) -> Result<Vec<CorpusEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let options = ParseOptions {
        strip_functional_tags: !keep_tags,
        drop_empty_elements: !keep_empty,
    };
    let entries = parse_corpus(&text, options).with_context(|| format!("in {}", path.display()))?;
    if entries.is_empty() {
        return Err(Error::Manifest(format!("{} holds no trees", path.display())).into());
    }
    Ok(entries)
}

/// A tree with the embedding set of the same sentence.
pub struct Sentence {
    pub id: String,
    pub tree: SyntaxTree,
    pub set: EmbeddingSet,
}

/// Match trees to embedding sets by id when every tree line carries one,
/// otherwise by position.
pub fn sentences(entries: Vec<CorpusEntry>, manifest: &Manifest) -> Result<Vec<Sentence>> {
    let with_ids = entries.iter().filter(|e| e.id.is_some()).count();
    let out: Vec<Sentence> = if with_ids == entries.len() {
        entries
            .into_iter()
            .map(|e| {
                let id = e.id.expect("checked");
                let set = manifest.load_embedding_set(&id)?;
                Ok(Sentence { id, tree: e.tree, set })
            })
            .collect::<Result<_>>()?
    } else if with_ids == 0 {
        let sets = manifest.embedding_sets()?;
        if sets.len() != entries.len() {
            return Err(Error::Manifest(format!(
                "{} trees without ids but {} embedding sets; positional matching needs equal counts",
                entries.len(),
                sets.len()
            ))
            .into());
        }
        entries
            .into_iter()
            .zip(sets)
            .map(|(e, set)| Sentence {
                id: set.id.clone(),
                tree: e.tree,
                set,
            })
            .collect()
    } else {
        return Err(Error::Manifest("either every tree line carries an id or none does".into()).into());
    };
    for s in &out {
        if s.tree.leaf_count() != s.set.len() {
            return Err(Error::LeafCount {
                leaves: s.tree.leaf_count(),
                rows: s.set.len(),
            })
            .with_context(|| format!("sentence {:?}", s.id));
        }
    }
    let mut seen = HashMap::new();
    for (i, s) in out.iter().enumerate() {
        if let Some(j) = seen.insert(s.id.as_str(), i) {
            return Err(Error::Manifest(format!("sentence id {:?} appears at trees {j} and {i}", s.id)).into());
        }
    }
    Ok(out)
}

pub fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    Ok(())
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).with_context(|| format!("serializing {}", path.display()))?;
    write_text(path, &(text + "\n"))
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    ensure_parent(path)?;
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}
