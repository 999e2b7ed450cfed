use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::corpus::pca::PcaProjection;
use crate::corpus::vocab::Vocabulary;
use crate::error::{Error, Result};

/// Word vectors in GloVe text format, all of one dimension.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
        }
        Ok(EmbeddingTable {
            dim,
            vectors: HashMap::new(),
        })
    }

    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::shape(
                "embedding",
                format!("expected {} values, got {}", self.dim, vector.len()),
            ));
        }
        self.vectors.insert(token.into(), vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    /// Copy holding only the entries whose token passes `keep`.
    pub fn restricted(&self, keep: impl Fn(&str) -> bool) -> EmbeddingTable {
        EmbeddingTable {
            dim: self.dim,
            vectors: self
                .vectors
                .iter()
                .filter(|(k, _)| keep(k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut table: Option<EmbeddingTable> = None;
        for (i, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let values = parts
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| parse_err(i + 1, e.to_string()))?;
            let t = match &mut table {
                Some(t) => t,
                None => table.insert(
                    EmbeddingTable::new(values.len())
                        .map_err(|_| parse_err(i + 1, "no vector values".into()))?,
                ),
            };
            t.insert(token, values).map_err(|e| parse_err(i + 1, e.to_string()))?;
        }
        table.ok_or_else(|| Error::Empty(format!("{} holds no embeddings", path.display())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut keys: Vec<&String> = self.vectors.keys().collect();
        keys.sort();
        let mut out = String::new();
        for k in keys {
            out.push_str(k);
            for v in &self.vectors[k] {
                out.push(' ');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }
}

fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// L2-normalized mean embedding; unknown tokens count as zero vectors.
pub fn bow_embed<S: AsRef<str>>(tokens: &[S], table: &EmbeddingTable) -> Result<Vec<f64>> {
    if tokens.is_empty() {
        return Err(Error::Empty("bag-of-words over no tokens".into()));
    }
    let mut acc = vec![0.0; table.dim()];
    for t in tokens {
        if let Some(e) = table.get(t.as_ref()) {
            acc.iter_mut().zip(e).for_each(|(a, x)| *a += x);
        }
    }
    let n = tokens.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    l2_normalize(&mut acc);
    Ok(acc)
}

/// Raw token counts over the vocabulary.
pub fn bow_counts<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> Result<Vec<f64>> {
    if tokens.is_empty() {
        return Err(Error::Empty("bag-of-words over no tokens".into()));
    }
    let mut acc = vec![0.0; vocab.len()];
    for id in vocab.encode(tokens) {
        acc[id] += 1.0;
    }
    Ok(acc)
}

/// Sentence representation used for clustering and cluster evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BowMode {
    #[default]
    EmbeddingMean,
    Counts,
}

#[derive(Debug, Clone, Copy)]
pub enum SentenceEncoder<'a> {
    EmbeddingMean(&'a EmbeddingTable),
    Counts(&'a Vocabulary),
}

impl SentenceEncoder<'_> {
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<f64>> {
        match self {
            SentenceEncoder::EmbeddingMean(t) => bow_embed(tokens, t),
            SentenceEncoder::Counts(v) => bow_counts(tokens, v),
        }
    }
}

/// `Σ emb(p)` over the predicates; unknown tokens contribute zero.
pub fn predicate_sum<S: AsRef<str>>(predicates: &[S], table: &EmbeddingTable) -> Vec<f64> {
    let mut acc = vec![0.0; table.dim()];
    for p in predicates {
        if let Some(e) = table.get(p.as_ref()) {
            acc.iter_mut().zip(e).for_each(|(a, x)| *a += x);
        }
    }
    acc
}

/// A projected predicate vector; `empty` marks an empty predicate set.
#[derive(Debug, Clone, PartialEq)]
pub struct PredicateVector {
    pub values: Vec<f64>,
    pub empty: bool,
}

pub fn predicate_vector<S: AsRef<str>>(
    predicates: &[S],
    table: &EmbeddingTable,
    proj: &PcaProjection,
) -> Result<PredicateVector> {
    let values = proj.project(&predicate_sum(predicates, table))?;
    if predicates.is_empty() {
        log::warn!("predicate vector requested for an empty predicate set");
    }
    Ok(PredicateVector {
        values,
        empty: predicates.is_empty(),
    })
}
