//! Request handling behind the suggestion endpoints.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::annotate::frames_of;
use crate::corpus::{resolve_frames, FrameId, Lexicons, CONTEXT_SENTENCES};
use crate::decoding::{generate_list, generate_per_attribute, DecodeMethod, GenerationItem};
use crate::error::Error;
use crate::model::{AttributeKind, AttributeValue, Seq2Seq};
use crate::selection::{frame_vector, rerank_frame_sets, top_k, FramePredictor, RerankConfig};

pub const DEFAULT_SUGGESTIONS: usize = 3;
pub const DEFAULT_TEMPERATURE: f64 = 0.6;
const MAX_SUGGESTIONS: usize = 100;

/// How the attribute value of a request is chosen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum ValueSpec {
    Explicit(String),
    AutoRerank,
    AutoPredict,
}

impl From<String> for ValueSpec {
    fn from(s: String) -> Self {
        match s.as_str() {
            "auto-rerank" => ValueSpec::AutoRerank,
            "auto-predict" => ValueSpec::AutoPredict,
            _ => ValueSpec::Explicit(s),
        }
    }
}

impl From<ValueSpec> for String {
    fn from(v: ValueSpec) -> Self {
        match v {
            ValueSpec::Explicit(s) => s,
            ValueSpec::AutoRerank => "auto-rerank".into(),
            ValueSpec::AutoPredict => "auto-predict".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Beam,
    Sample,
}

fn default_n() -> usize {
    DEFAULT_SUGGESTIONS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionRequest {
    /// One to four raw sentences.
    pub context: Vec<String>,
    /// Must match the loaded model when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute: Option<AttributeKind>,
    /// Omitted: one suggestion per enumerated value, up to `n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<ValueSpec>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl SuggestionRequest {
    pub fn new(context: Vec<String>) -> Self {
        SuggestionRequest {
            context,
            attribute: None,
            value: None,
            n: DEFAULT_SUGGESTIONS,
            method: Method::Beam,
            temperature: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub text: String,
    /// Label of the attribute value used.
    pub attribute: String,
    pub value: Option<AttributeValue>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionResponse {
    pub suggestions: Vec<Suggestion>,
    pub model: String,
    pub warnings: Vec<String>,
}

/// Loaded attribute type and what may be requested of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributesInfo {
    pub attribute: AttributeKind,
    pub values: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<Vec<String>>,
    pub auto_predict: bool,
    pub auto_rerank: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    NotImplemented,
    Internal,
}

/// Error body returned to clients.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{message}")]
pub struct ServiceError {
    pub code: ErrorCode,
    pub message: String,
}

impl ServiceError {
    pub fn bad_request(message: impl Into<String>) -> Self {
        ServiceError { code: ErrorCode::BadRequest, message: message.into() }
    }

    pub fn not_implemented(message: impl Into<String>) -> Self {
        ServiceError { code: ErrorCode::NotImplemented, message: message.into() }
    }
}

impl From<Error> for ServiceError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::UnknownValue(_) | Error::InvalidArgument(_) | Error::Empty(_) => ErrorCode::BadRequest,
            _ => ErrorCode::Internal,
        };
        ServiceError { code, message: e.to_string() }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorCode::BadRequest => "bad_request",
            ErrorCode::NotImplemented => "not_implemented",
            ErrorCode::Internal => "internal",
        })
    }
}

/// Lowercases and splits off punctuation.
pub fn tokenize_raw(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.to_lowercase().split_whitespace() {
        let mut cur = String::new();
        for ch in word.chars() {
            if matches!(ch, '.' | ',' | '!' | '?' | ';' | ':' | '"' | '(' | ')') {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            } else {
                cur.push(ch);
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

/// Joins with spaces, without a space before punctuation.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for t in tokens {
        let t = t.as_ref();
        let punct = matches!(t, "." | "," | "!" | "?" | ";" | ":");
        if !out.is_empty() && !punct {
            out.push(' ');
        }
        out.push_str(t);
    }
    out
}

/// The models one service instance answers from.
#[derive(Debug, Clone)]
pub struct Suggester {
    pub name: String,
    pub model: Seq2Seq,
    pub reverse: Option<Seq2Seq>,
    pub predictor: Option<FramePredictor>,
    /// Frame annotator for contexts in auto-predict mode.
    pub lexicons: Option<Lexicons>,
    /// Candidate pool for auto-rerank, most frequent first.
    pub frame_sets: Vec<BTreeSet<FrameId>>,
    pub rerank: RerankConfig,
}

impl Suggester {
    pub fn new(name: impl Into<String>, model: Seq2Seq) -> Self {
        Suggester {
            name: name.into(),
            model,
            reverse: None,
            predictor: None,
            lexicons: None,
            frame_sets: Vec::new(),
            rerank: RerankConfig::default(),
        }
    }

    /// Model identifier reported with each response.
    pub fn model_id(&self) -> String {
        let hash = self.model.vocab.hash();
        format!("{}:{}:{}", self.name, self.model.attribute.kind(), &hash[..12])
    }

    fn frames_model(&self) -> bool {
        self.model.attribute.kind() == AttributeKind::Frames
    }

    pub fn can_predict(&self) -> bool {
        self.frames_model() && self.predictor.is_some() && self.lexicons.is_some()
    }

    pub fn can_rerank(&self) -> bool {
        self.frames_model() && self.reverse.is_some()
    }

    pub fn attributes(&self) -> AttributesInfo {
        let attr = &self.model.attribute;
        let values = attr
            .enumerate_values(MAX_SUGGESTIONS)
            .map(|vs| vs.iter().map(|v| attr.describe(v)).collect())
            .unwrap_or_default();
        AttributesInfo {
            attribute: attr.kind(),
            values,
            frames: attr.frame_inventory().map(|inv| inv.names().to_vec()),
            auto_predict: self.can_predict(),
            auto_rerank: self.can_rerank(),
        }
    }

    fn method(&self, req: &SuggestionRequest, n: usize) -> Result<DecodeMethod, ServiceError> {
        Ok(match req.method {
            Method::Beam if n == 1 => DecodeMethod::Greedy,
            Method::Beam => DecodeMethod::Beam { width: n, keep: n },
            Method::Sample => {
                let temperature = req.temperature.unwrap_or(DEFAULT_TEMPERATURE);
                if !(temperature.is_finite() && temperature > 0.0) {
                    return Err(ServiceError::bad_request(format!("temperature must be positive, got {temperature}")));
                }
                DecodeMethod::Sample { temperature, n, seed: req.seed }
            }
        })
    }

    /// Method for one continuation per value.
    fn single(&self, req: &SuggestionRequest) -> Result<DecodeMethod, ServiceError> {
        Ok(match self.method(req, 1)? {
            DecodeMethod::Sample { temperature, seed, .. } => DecodeMethod::Sample { temperature, n: 1, seed },
            m => m,
        })
    }

    pub fn suggest(&self, req: &SuggestionRequest) -> Result<SuggestionResponse, ServiceError> {
        if req.n == 0 || req.n > MAX_SUGGESTIONS {
            return Err(ServiceError::bad_request(format!("n must be between 1 and {MAX_SUGGESTIONS}")));
        }
        if req.context.is_empty() || req.context.len() > CONTEXT_SENTENCES {
            return Err(ServiceError::bad_request(format!(
                "context must have 1 to {CONTEXT_SENTENCES} sentences, got {}",
                req.context.len()
            )));
        }
        let kind = self.model.attribute.kind();
        if let Some(asked) = req.attribute {
            if asked != kind {
                return Err(ServiceError::bad_request(format!("loaded model is conditioned on {kind}, not {asked}")));
            }
        }
        let context: Vec<Vec<String>> = req.context.iter().map(|s| tokenize_raw(s)).collect();
        if context.iter().any(Vec::is_empty) {
            return Err(ServiceError::bad_request("context sentences must not be empty"));
        }
        let mut warnings = Vec::new();
        let unknown: BTreeSet<&str> = context
            .iter()
            .flatten()
            .map(String::as_str)
            .filter(|t| !self.model.vocab.contains(t))
            .collect();
        if !unknown.is_empty() {
            warnings.push(format!(
                "unknown words mapped to <unk>: {}",
                unknown.into_iter().collect::<Vec<_>>().join(", ")
            ));
        }
        let source = self.model.vocab.encode_context(&context);

        let items: Vec<GenerationItem> = match &req.value {
            None if kind == AttributeKind::None => {
                generate_list(&self.model, "request", &source, &AttributeValue::None, &self.method(req, req.n)?)?.items
            }
            None => {
                let values = self.model.attribute.enumerate_values(req.n)?;
                let values: Vec<AttributeValue> = values.into_iter().take(req.n).collect();
                generate_per_attribute(&self.model, "request", &source, &values, &self.single(req)?)?.items
            }
            Some(ValueSpec::Explicit(text)) => {
                let value = self
                    .model
                    .attribute
                    .parse_value(text)
                    .map_err(|e| ServiceError::bad_request(format!("invalid {kind} value {text:?}: {e}")))?;
                generate_list(&self.model, "request", &source, &value, &self.method(req, req.n)?)?.items
            }
            Some(ValueSpec::AutoPredict) => {
                let (Some(predictor), Some(lex), true) = (&self.predictor, &self.lexicons, self.frames_model()) else {
                    return Err(ServiceError::not_implemented(
                        "auto-predict needs a frames model, a frame predictor and lexicons",
                    ));
                };
                let inv = self
                    .model
                    .attribute
                    .frame_inventory()
                    .ok_or_else(|| ServiceError::not_implemented("frames model without inventory"))?;
                let vectors: Vec<_> = context
                    .iter()
                    .map(|s| {
                        let names: Vec<String> = frames_of(s, lex).into_iter().collect();
                        frame_vector(&resolve_frames(&names, inv))
                    })
                    .collect();
                // Catch-all and unused slots are never proposed.
                let mut scores = predictor.predict(&vectors)?;
                scores.truncate(inv.len());
                let ids = top_k(&scores, req.n.min(inv.len()))?;
                let values: Vec<AttributeValue> = ids.into_iter().map(|i| AttributeValue::Frames(BTreeSet::from([i]))).collect();
                generate_per_attribute(&self.model, "request", &source, &values, &self.single(req)?)?.items
            }
            Some(ValueSpec::AutoRerank) => {
                let (Some(reverse), true) = (&self.reverse, self.frames_model()) else {
                    return Err(ServiceError::not_implemented("auto-rerank needs a frames model and a reverse model"));
                };
                let pool: Vec<BTreeSet<FrameId>> = if self.frame_sets.is_empty() {
                    warnings.push("no frame-set pool loaded; reranking singleton frames".into());
                    let n = self.model.attribute.frame_inventory().map_or(0, |inv| inv.len());
                    (0..n.min(self.rerank.candidate_sets)).map(|i| BTreeSet::from([i])).collect()
                } else {
                    self.frame_sets.clone()
                };
                let cfg = RerankConfig { k: req.n.min(pool.len().min(self.rerank.candidate_sets)), ..self.rerank };
                rerank_frame_sets(&self.model, reverse, "request", &context, &pool, &self.single(req)?, &cfg)?.items
            }
        };

        if items.len() < req.n {
            warnings.push(format!("returning {} of {} requested suggestions", items.len(), req.n));
        }
        let suggestions = items
            .into_iter()
            .map(|it| Suggestion {
                text: detokenize(&it.tokens),
                attribute: it.attribute,
                value: it.value,
                score: it.score,
            })
            .collect();
        Ok(SuggestionResponse {
            suggestions,
            model: self.model_id(),
            warnings,
        })
    }
}
