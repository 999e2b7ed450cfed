use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{FrameId, TokenId};
use crate::decoding::{decode, DecodeMethod, GenerationItem, GenerationList, Generator, DEFAULT_MAX_LEN};
use crate::error::{Error, Result};
use crate::model::{AttributeKind, AttributeValue, Seq2Seq};

pub const DEFAULT_LAMBDA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RerankConfig {
    /// Weight of the reverse score.
    pub lambda: f64,
    /// Candidates kept.
    pub k: usize,
    /// Number of frequent frame sets decoded as candidates.
    pub candidate_sets: usize,
}

impl Default for RerankConfig {
    fn default() -> Self {
        RerankConfig {
            lambda: DEFAULT_LAMBDA,
            k: 3,
            candidate_sets: 100,
        }
    }
}

impl RerankConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!("lambda must be finite and non-negative, got {}", self.lambda)));
        }
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Scores of one candidate continuation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    /// `log p(y | x)`.
    pub forward: f64,
    /// `|y|`, counting the end marker.
    pub length: usize,
    /// `log p(x | y)` under the reverse model.
    pub reverse: f64,
}

impl Candidate {
    pub fn combined(&self, lambda: f64) -> f64 {
        self.forward / self.length as f64 + lambda * self.reverse
    }
}

/// Indices of the best `k` candidates by `forward / length + λ · reverse`,
/// descending, ties kept in input order, paired with their combined scores.
pub fn rerank(candidates: &[Candidate], lambda: f64, k: usize) -> Result<Vec<(usize, f64)>> {
    RerankConfig { lambda, k, candidate_sets: candidates.len() }.validate()?;
    if candidates.is_empty() {
        return Err(Error::Empty("no candidates to rerank".into()));
    }
    if k > candidates.len() {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds {} candidates", candidates.len())));
    }
    if let Some(i) = candidates.iter().position(|c| c.length == 0) {
        return Err(Error::InvalidArgument(format!("candidate {i} has zero length")));
    }
    let mut scored: Vec<(usize, f64)> = candidates.iter().map(|c| c.combined(lambda)).enumerate().collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    scored.truncate(k);
    Ok(scored)
}

/// Generates one continuation per frame set and keeps the `cfg.k` best by
/// combined forward and reverse score.
pub fn rerank_frame_sets(
    forward: &Seq2Seq,
    reverse: &Seq2Seq,
    context_id: &str,
    context: &[Vec<String>],
    frame_sets: &[BTreeSet<FrameId>],
    method: &DecodeMethod,
    cfg: &RerankConfig,
) -> Result<GenerationList> {
    cfg.validate()?;
    if forward.attribute.kind() != AttributeKind::Frames {
        return Err(Error::InvalidArgument(format!(
            "reranking needs a frames model, got {}",
            forward.attribute.kind()
        )));
    }
    if reverse.attribute.kind() != AttributeKind::None {
        return Err(Error::InvalidArgument("the reverse model must be unconditioned".into()));
    }
    let source = forward.vocab.encode_context(context);
    let reverse_target: Vec<TokenId> = reverse.vocab.encode_context(context);
    let mut items = Vec::with_capacity(frame_sets.len());
    let mut candidates = Vec::with_capacity(frame_sets.len());
    for set in frame_sets.iter().take(cfg.candidate_sets) {
        let value = AttributeValue::Frames(set.clone());
        let hyps = decode(forward, &source, &value, method, DEFAULT_MAX_LEN)?;
        let best = hyps.first().ok_or_else(|| Error::Empty("decoder produced no hypothesis".into()))?;
        let tokens = forward.vocab.decode(&best.tokens);
        let mut reverse_source = reverse.vocab.encode(&tokens);
        if reverse_source.is_empty() {
            // An empty continuation is read back from the end marker alone.
            reverse_source.push(reverse.vocab.eos());
        }
        let rev = reverse.log_likelihood(&reverse_source, &AttributeValue::None, &reverse_target)?;
        candidates.push(Candidate {
            forward: best.log_prob,
            length: best.len(),
            reverse: rev,
        });
        items.push(GenerationItem {
            attribute: forward.attribute.describe(&value),
            value: Some(value),
            tokens,
            score: 0.0,
            forward: Some(best.log_prob),
            reverse: Some(rev),
        });
    }
    let ranked = rerank(&candidates, cfg.lambda, cfg.k)?;
    let items = ranked
        .into_iter()
        .map(|(i, score)| GenerationItem { score, ..items[i].clone() })
        .collect();
    Ok(GenerationList {
        context_id: context_id.to_owned(),
        generator: Generator::Rerank,
        items,
    })
}
