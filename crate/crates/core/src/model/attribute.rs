use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::corpus::embeddings::{bow_embed, predicate_vector, EmbeddingTable};
use crate::corpus::frames::{FrameId, FrameInventory, CATCH_ALL, FRAME_SLOTS};
use crate::corpus::length::{bin_length, LengthScheme};
use crate::corpus::pca::PcaProjection;
use crate::corpus::sidecar::Annotation;
use crate::corpus::story::Story;
use crate::corpus::Sentiment;
use crate::error::{Error, Result};

/// Which property of the continuation conditions generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    None,
    Sentiment,
    Length3,
    Length30,
    Predicates,
    Frames,
    Clusters,
    Bow,
}

impl AttributeKind {
    pub const ALL: [AttributeKind; 8] = [
        AttributeKind::None,
        AttributeKind::Sentiment,
        AttributeKind::Length3,
        AttributeKind::Length30,
        AttributeKind::Predicates,
        AttributeKind::Frames,
        AttributeKind::Clusters,
        AttributeKind::Bow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttributeKind::None => "none",
            AttributeKind::Sentiment => "sentiment",
            AttributeKind::Length3 => "length3",
            AttributeKind::Length30 => "length30",
            AttributeKind::Predicates => "predicates",
            AttributeKind::Frames => "frames",
            AttributeKind::Clusters => "clusters",
            AttributeKind::Bow => "bow",
        }
    }

    pub fn length_scheme(self) -> Option<LengthScheme> {
        match self {
            AttributeKind::Length3 => Some(LengthScheme::ThreeBin),
            AttributeKind::Length30 => Some(LengthScheme::PerLength),
            _ => None,
        }
    }
}

impl fmt::Display for AttributeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttributeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttributeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownValue(format!("attribute type {s:?}")))
    }
}

/// One attribute value `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "lowercase")]
pub enum AttributeValue {
    None,
    Sentiment(Sentiment),
    Length(usize),
    Predicates(Vec<String>),
    Frames(BTreeSet<FrameId>),
    Cluster(usize),
    Bow(Vec<f64>),
}

/// How the control vector enters the network.
#[derive(Debug, Clone, PartialEq)]
pub enum ZInput {
    None,
    /// A fixed vector used as `z` directly.
    Dense(Vec<f64>),
    /// Multi-hot frame indicator; `z` is its product with the learned table.
    MultiHot(Vec<f64>),
}

impl ZInput {
    /// Stacks one row per example into a `[B, width]` tensor.
    pub fn stack(inputs: &[ZInput]) -> Result<Option<(Tensor, bool)>> {
        let Some(first) = inputs.first() else {
            return Ok(None);
        };
        let (width, multi) = match first {
            ZInput::None => return Ok(None),
            ZInput::Dense(v) => (v.len(), false),
            ZInput::MultiHot(v) => (v.len(), true),
        };
        let mut data = Vec::with_capacity(inputs.len() * width);
        for z in inputs {
            match (z, multi) {
                (ZInput::Dense(v), false) | (ZInput::MultiHot(v), true) if v.len() == width => {
                    data.extend_from_slice(v)
                }
                _ => return Err(Error::Contract("mixed attribute inputs in one batch".into())),
            }
        }
        Ok(Some((Tensor::matrix(inputs.len(), width, data)?, multi)))
    }
}

/// Maps attribute values to control vectors `z`; `z_enc` and `z_dec` are both the full `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeEmbedder {
    kind: AttributeKind,
    /// Identity rows for fixed one-hot kinds; never trained.
    fixed_table: Option<Tensor>,
    embeddings: Option<EmbeddingTable>,
    pca: Option<PcaProjection>,
    frames: Option<FrameInventory>,
    frame_dim: usize,
    /// Predicates ranked by training frequency.
    predicate_inventory: Vec<String>,
}

fn one_hot_table(n: usize) -> Tensor {
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        data[i * n + i] = 1.0;
    }
    Tensor::from_parts(vec![n, n], data)
}

impl AttributeEmbedder {
    fn base(kind: AttributeKind) -> Self {
        AttributeEmbedder {
            kind,
            fixed_table: None,
            embeddings: None,
            pca: None,
            frames: None,
            frame_dim: 0,
            predicate_inventory: Vec::new(),
        }
    }

    pub fn none() -> Self {
        Self::base(AttributeKind::None)
    }

    pub fn sentiment() -> Self {
        AttributeEmbedder {
            fixed_table: Some(one_hot_table(3)),
            ..Self::base(AttributeKind::Sentiment)
        }
    }

    pub fn length(scheme: LengthScheme) -> Self {
        let kind = match scheme {
            LengthScheme::ThreeBin => AttributeKind::Length3,
            LengthScheme::PerLength => AttributeKind::Length30,
        };
        AttributeEmbedder {
            fixed_table: Some(one_hot_table(scheme.bins())),
            ..Self::base(kind)
        }
    }

    pub fn clusters(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("cluster attribute needs k >= 1".into()));
        }
        Ok(AttributeEmbedder {
            fixed_table: Some(one_hot_table(k)),
            ..Self::base(AttributeKind::Clusters)
        })
    }

    pub fn predicates(embeddings: EmbeddingTable, pca: PcaProjection, ranked: Vec<String>) -> Result<Self> {
        if pca.dim() != embeddings.dim() {
            return Err(Error::shape(
                "predicate embedder",
                format!("projection of {} for embeddings of {}", pca.dim(), embeddings.dim()),
            ));
        }
        Ok(AttributeEmbedder {
            embeddings: Some(embeddings),
            pca: Some(pca),
            predicate_inventory: ranked,
            ..Self::base(AttributeKind::Predicates)
        })
    }

    pub fn frames(inventory: FrameInventory, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("frame embedding width must be positive".into()));
        }
        Ok(AttributeEmbedder {
            frames: Some(inventory),
            frame_dim: dim,
            ..Self::base(AttributeKind::Frames)
        })
    }

    pub fn bow(embeddings: EmbeddingTable) -> Self {
        AttributeEmbedder {
            embeddings: Some(embeddings),
            ..Self::base(AttributeKind::Bow)
        }
    }

    pub fn kind(&self) -> AttributeKind {
        self.kind
    }

    pub fn fixed_table(&self) -> Option<&Tensor> {
        self.fixed_table.as_ref()
    }

    pub fn frame_inventory(&self) -> Option<&FrameInventory> {
        self.frames.as_ref()
    }

    pub fn embeddings(&self) -> Option<&EmbeddingTable> {
        self.embeddings.as_ref()
    }

    pub fn predicate_inventory(&self) -> &[String] {
        &self.predicate_inventory
    }

    /// Width of `z` (and of each of its halves).
    pub fn z_dim(&self) -> usize {
        match self.kind {
            AttributeKind::None => 0,
            AttributeKind::Sentiment | AttributeKind::Length3 | AttributeKind::Length30 | AttributeKind::Clusters => {
                self.fixed_table.as_ref().map_or(0, Tensor::rows)
            }
            AttributeKind::Predicates => self.pca.as_ref().map_or(0, PcaProjection::k),
            AttributeKind::Frames => self.frame_dim,
            AttributeKind::Bow => self.embeddings.as_ref().map_or(0, EmbeddingTable::dim),
        }
    }

    /// Rows of the learned table, if this kind has one.
    pub fn learned_rows(&self) -> Option<usize> {
        (self.kind == AttributeKind::Frames).then_some(FRAME_SLOTS)
    }

    fn mismatch(&self, value: &AttributeValue) -> Error {
        Error::UnknownValue(format!("{value:?} is not a {} value", self.kind))
    }

    fn fixed_row(&self, i: usize, value: &AttributeValue) -> Result<ZInput> {
        let table = self.fixed_table.as_ref().ok_or_else(|| self.mismatch(value))?;
        if i >= table.rows() {
            return Err(Error::UnknownValue(format!(
                "{} value {i} out of range 0..{}",
                self.kind,
                table.rows()
            )));
        }
        Ok(ZInput::Dense(table.row_slice(i).to_vec()))
    }

    /// Network input for `value`; an empty frame set gives the zero vector with a warning.
    pub fn input(&self, value: &AttributeValue) -> Result<ZInput> {
        match (self.kind, value) {
            (AttributeKind::None, AttributeValue::None) => Ok(ZInput::None),
            (AttributeKind::Sentiment, AttributeValue::Sentiment(s)) => self.fixed_row(s.index(), value),
            (AttributeKind::Length3 | AttributeKind::Length30, AttributeValue::Length(b)) => self.fixed_row(*b, value),
            (AttributeKind::Clusters, AttributeValue::Cluster(c)) => self.fixed_row(*c, value),
            (AttributeKind::Predicates, AttributeValue::Predicates(p)) => {
                let (Some(table), Some(pca)) = (&self.embeddings, &self.pca) else {
                    return Err(Error::Contract("predicate embedder lacks its resources".into()));
                };
                Ok(ZInput::Dense(predicate_vector(p, table, pca)?.values))
            }
            (AttributeKind::Frames, AttributeValue::Frames(ids)) => {
                let inv = self.frames.as_ref().ok_or_else(|| self.mismatch(value))?;
                let mut hot = vec![0.0; FRAME_SLOTS];
                for &id in ids {
                    if id != CATCH_ALL && id >= inv.len() {
                        return Err(Error::UnknownValue(format!("frame id {id}")));
                    }
                    hot[id] = 1.0;
                }
                if ids.is_empty() {
                    log::warn!("empty frame set maps to the zero control vector");
                }
                Ok(ZInput::MultiHot(hot))
            }
            (AttributeKind::Bow, AttributeValue::Bow(v)) => {
                if v.len() != self.z_dim() {
                    return Err(Error::shape(
                        "bow attribute",
                        format!("expected {} values, got {}", self.z_dim(), v.len()),
                    ));
                }
                Ok(ZInput::Dense(v.clone()))
            }
            _ => Err(self.mismatch(value)),
        }
    }

    /// True when `value` embeds to a degenerate (empty-sum) vector.
    pub fn is_degenerate(value: &AttributeValue) -> bool {
        match value {
            AttributeValue::Frames(ids) => ids.is_empty(),
            AttributeValue::Predicates(p) => p.is_empty(),
            _ => false,
        }
    }

    /// The training label of a story, read from its annotation.
    pub fn value_from_annotation(&self, ann: &Annotation, story: &Story) -> Result<AttributeValue> {
        Ok(match self.kind {
            AttributeKind::None => AttributeValue::None,
            AttributeKind::Sentiment => AttributeValue::Sentiment(ann.sentiment),
            AttributeKind::Length3 => AttributeValue::Length(bin_length(ann.length, LengthScheme::ThreeBin)?),
            AttributeKind::Length30 => AttributeValue::Length(bin_length(ann.length, LengthScheme::PerLength)?),
            AttributeKind::Predicates => AttributeValue::Predicates(ann.predicates.clone()),
            AttributeKind::Frames => {
                let inv = self.frames.as_ref().ok_or_else(|| Error::Contract("no frame inventory".into()))?;
                AttributeValue::Frames(crate::corpus::resolve_frames(&ann.frames, inv))
            }
            AttributeKind::Clusters => AttributeValue::Cluster(
                ann.cluster
                    .ok_or_else(|| Error::MissingAnnotations(vec![format!("{} (cluster)", ann.id)]))?,
            ),
            AttributeKind::Bow => {
                let table = self.embeddings.as_ref().ok_or_else(|| Error::Contract("no embeddings".into()))?;
                AttributeValue::Bow(bow_embed(&story.continuation, table)?)
            }
        })
    }

    /// Every value used for per-attribute generation, in canonical order.
    ///
    /// Frames and predicates enumerate singleton sets of their ranked inventories.
    pub fn enumerate_values(&self, limit: usize) -> Result<Vec<AttributeValue>> {
        Ok(match self.kind {
            AttributeKind::None => vec![AttributeValue::None],
            AttributeKind::Sentiment => Sentiment::ALL.into_iter().map(AttributeValue::Sentiment).collect(),
            AttributeKind::Length3 | AttributeKind::Length30 | AttributeKind::Clusters => {
                let n = self.z_dim();
                (0..n)
                    .map(|i| match self.kind {
                        AttributeKind::Clusters => AttributeValue::Cluster(i),
                        _ => AttributeValue::Length(i),
                    })
                    .collect()
            }
            AttributeKind::Predicates => self
                .predicate_inventory
                .iter()
                .take(limit)
                .map(|p| AttributeValue::Predicates(vec![p.clone()]))
                .collect(),
            AttributeKind::Frames => {
                let inv = self.frames.as_ref().ok_or_else(|| Error::Contract("no frame inventory".into()))?;
                (0..inv.len().min(limit))
                    .map(|i| AttributeValue::Frames(BTreeSet::from([i])))
                    .collect()
            }
            AttributeKind::Bow => {
                return Err(Error::InvalidArgument(
                    "bag-of-words values are continuous and cannot be enumerated".into(),
                ))
            }
        })
    }

    /// Parses a user-facing value: a label, bin or cluster number, comma-separated
    /// predicates or frame names, or raw text for bag-of-words.
    pub fn parse_value(&self, text: &str) -> Result<AttributeValue> {
        let text = text.trim();
        let int = |t: &str| {
            t.parse::<usize>()
                .map_err(|_| Error::UnknownValue(format!("{} value {t:?}", self.kind)))
        };
        let list = || {
            text.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_owned)
                .collect::<Vec<_>>()
        };
        let value = match self.kind {
            AttributeKind::None => AttributeValue::None,
            AttributeKind::Sentiment => AttributeValue::Sentiment(text.parse()?),
            AttributeKind::Length3 | AttributeKind::Length30 => AttributeValue::Length(int(text)?),
            AttributeKind::Clusters => AttributeValue::Cluster(int(text)?),
            AttributeKind::Predicates => AttributeValue::Predicates(list()),
            AttributeKind::Frames => {
                let inv = self.frames.as_ref().ok_or_else(|| Error::Contract("no frame inventory".into()))?;
                let mut ids = BTreeSet::new();
                for name in list() {
                    let id = match name.parse::<usize>() {
                        Ok(i) => i,
                        Err(_) => {
                            let id = inv.id(&name);
                            if id == CATCH_ALL && name != crate::corpus::frames::CATCH_ALL_NAME {
                                log::warn!("frame {name} is outside the inventory; using the catch-all");
                            }
                            id
                        }
                    };
                    ids.insert(id);
                }
                AttributeValue::Frames(ids)
            }
            AttributeKind::Bow => {
                let table = self.embeddings.as_ref().ok_or_else(|| Error::Contract("no embeddings".into()))?;
                let tokens = crate::corpus::tokenize_sentence(&text.to_lowercase());
                AttributeValue::Bow(bow_embed(&tokens, table)?)
            }
        };
        self.input(&value)?;
        Ok(value)
    }

    /// Human-readable label.
    pub fn describe(&self, value: &AttributeValue) -> String {
        match value {
            AttributeValue::None => "none".into(),
            AttributeValue::Sentiment(s) => s.to_string(),
            AttributeValue::Length(b) => match self.kind.length_scheme() {
                Some(scheme) => scheme.describe(*b),
                None => b.to_string(),
            },
            AttributeValue::Predicates(p) => p.join(","),
            AttributeValue::Frames(ids) => {
                let names: Vec<String> = ids
                    .iter()
                    .map(|&i| {
                        self.frames
                            .as_ref()
                            .and_then(|inv| inv.name(i))
                            .map_or_else(|| i.to_string(), str::to_owned)
                    })
                    .collect();
                names.join(",")
            }
            AttributeValue::Cluster(c) => format!("cluster {c}"),
            AttributeValue::Bow(_) => "bag-of-words".into(),
        }
    }
}

/// Predicates ranked by how many annotations contain them; ties lexicographic.
pub fn rank_predicates<'a>(annotations: impl IntoIterator<Item = &'a Annotation>) -> Vec<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for a in annotations {
        let distinct: BTreeSet<&str> = a.predicates.iter().map(String::as_str).collect();
        for p in distinct {
            *counts.entry(p).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked.into_iter().map(|(p, _)| p.to_owned()).collect()
}
