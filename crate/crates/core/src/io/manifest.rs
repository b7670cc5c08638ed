// SPDX-License-Identifier: MIT OR Apache-2.0

//! JSON manifests describing exported tensors.
//!
//! A manifest file holds one record or an array of records, each tagged by
//! `kind`. Tensor paths are resolved against the manifest's directory
//! unless absolute. Unknown fields are ignored.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::npy::load_tensor;
use crate::cacr::{AttentionBundle, AttentionLayer};
use crate::error::{Error, Result};
use crate::pooling::EmbeddingSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    EmbeddingSet(EmbeddingSetRecord),
    AttentionBundle(AttentionBundleRecord),
    CaptionPairSet(CaptionPairSetRecord),
}

impl Record {
    pub fn id(&self) -> &str {
        match self {
            Record::EmbeddingSet(r) => &r.id,
            Record::AttentionBundle(r) => &r.id,
            Record::CaptionPairSet(r) => &r.id,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Record::EmbeddingSet(_) => "embedding_set",
            Record::AttentionBundle(_) => "attention_bundle",
            Record::CaptionPairSet(_) => "caption_pair_set",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSetRecord {
    pub id: String,
    pub tokens: Vec<String>,
    pub token_embeddings: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentence_embedding: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionBundleRecord {
    pub id: String,
    pub n_language: usize,
    pub n_vision: usize,
    pub layers: Vec<LayerFiles>,
    /// Rows are post-softmax probabilities rather than raw scores.
    #[serde(default)]
    pub normalized: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LayerFiles {
    Full {
        full: PathBuf,
    },
    Blocks {
        ll: PathBuf,
        lv: PathBuf,
        vl: PathBuf,
        vv: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionPairSetRecord {
    #[serde(default)]
    pub id: String,
    pub pairs: Vec<CaptionPair>,
}

/// Two captions and two images; `scores` is an optional 2×2 file with
/// `[caption][image]` similarity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionPair {
    pub caption0_id: String,
    pub caption1_id: String,
    pub image0_id: String,
    pub image1_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    /// Directory relative paths are resolved against.
    pub base: PathBuf,
    pub records: Vec<Record>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base).map_err(|e| match e {
            Error::Manifest(reason) => Error::Manifest(format!("{}: {reason}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str, base: impl Into<PathBuf>) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        let records = match value {
            serde_json::Value::Array(items) => items
                .into_iter()
                .enumerate()
                .map(|(i, v)| serde_json::from_value(v).map_err(|e| Error::Manifest(format!("record {i}: {e}"))))
                .collect::<Result<Vec<Record>>>()?,
            v => vec![serde_json::from_value(v).map_err(|e| Error::Manifest(e.to_string()))?],
        };
        Ok(Self {
            base: base.into(),
            records,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = if self.records.len() == 1 {
            serde_json::to_string_pretty(&self.records[0])
        } else {
            serde_json::to_string_pretty(&self.records)
        }
        .map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn find(&self, kind: &'static str, id: &str) -> Result<&Record> {
        self.records
            .iter()
            .find(|r| r.kind() == kind && r.id() == id)
            .ok_or_else(|| Error::Manifest(format!("no {kind} record with id {id:?}")))
    }

    pub fn ids(&self, kind: &str) -> Vec<&str> {
        self.records
            .iter()
            .filter(|r| r.kind() == kind)
            .map(Record::id)
            .collect()
    }

    pub fn load_embedding_set(&self, id: &str) -> Result<EmbeddingSet> {
        let Record::EmbeddingSet(r) = self.find("embedding_set", id)? else {
            unreachable!()
        };
        let tokens = load_tensor(self.resolve(&r.token_embeddings))?.as_matrix();
        let sentence = r
            .sentence_embedding
            .as_ref()
            .map(|p| load_tensor(self.resolve(p)))
            .transpose()?;
        EmbeddingSet::new(r.id.clone(), r.tokens.clone(), tokens, sentence)
    }

    /// Every embedding set in file order.
    pub fn embedding_sets(&self) -> Result<Vec<EmbeddingSet>> {
        self.ids("embedding_set")
            .into_iter()
            .map(|id| self.load_embedding_set(id))
            .collect()
    }

    pub fn load_attention_bundle(&self, id: &str) -> Result<AttentionBundle> {
        let Record::AttentionBundle(r) = self.find("attention_bundle", id)? else {
            unreachable!()
        };
        if let Some(tokens) = &r.tokens {
            if tokens.len() != r.n_language + r.n_vision {
                return Err(Error::TokenCountMismatch {
                    id: r.id.clone(),
                    tokens: tokens.len(),
                    rows: r.n_language + r.n_vision,
                });
            }
        }
        let layers = r
            .layers
            .iter()
            .enumerate()
            .map(|(index, files)| {
                let layer = match files {
                    LayerFiles::Full { full } => {
                        let full = load_tensor(self.resolve(full))?.as_matrix();
                        AttentionLayer::from_full(index, &full, r.n_language, r.n_vision)?
                    }
                    LayerFiles::Blocks { ll, lv, vl, vv } => AttentionLayer::from_blocks(
                        index,
                        load_tensor(self.resolve(ll))?,
                        load_tensor(self.resolve(lv))?,
                        load_tensor(self.resolve(vl))?,
                        load_tensor(self.resolve(vv))?,
                    )?,
                };
                if layer.n_language() != r.n_language || layer.n_vision() != r.n_vision {
                    return Err(Error::BlockDims(format!(
                        "bundle {:?} layer {index}: blocks give N_L={}, N_V={}, manifest declares {}, {}",
                        r.id,
                        layer.n_language(),
                        layer.n_vision(),
                        r.n_language,
                        r.n_vision
                    )));
                }
                Ok(layer)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AttentionBundle {
            id: r.id.clone(),
            n_language: r.n_language,
            n_vision: r.n_vision,
            layers,
            normalized: r.normalized,
            tokens: r.tokens.clone(),
        })
    }

    pub fn caption_pair_sets(&self) -> Vec<&CaptionPairSetRecord> {
        self.records
            .iter()
            .filter_map(|r| match r {
                Record::CaptionPairSet(c) => Some(c),
                _ => None,
            })
            .collect()
    }
}
