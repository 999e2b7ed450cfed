use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::vocab::TokenId;
use crate::decoding::search::{decode, DecodeMethod, Hypothesis, DEFAULT_MAX_LEN};
use crate::error::{Error, Result};
use crate::model::{AttributeValue, Seq2Seq};

/// Which procedure produced a list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Generator {
    #[serde(rename = "BS")]
    Beam,
    #[serde(rename = "TS")]
    Sample,
    #[serde(rename = "attribute")]
    Attribute,
    #[serde(rename = "rerank")]
    Rerank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationItem {
    pub attribute: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<AttributeValue>,
    pub tokens: Vec<String>,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forward: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reverse: Option<f64>,
}

/// Continuations generated for one context.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationList {
    pub context_id: String,
    pub generator: Generator,
    pub items: Vec<GenerationItem>,
}

#[derive(Serialize, Deserialize)]
struct Line {
    context_id: String,
    generator: Generator,
    #[serde(flatten)]
    item: GenerationItem,
}

impl GenerationList {
    pub fn texts(&self) -> Vec<&[String]> {
        self.items.iter().map(|i| i.tokens.as_slice()).collect()
    }
}

/// Writes lists as JSON lines, one item per line.
pub fn write_generations(path: impl AsRef<Path>, lists: &[GenerationList]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for list in lists {
        for item in &list.items {
            let line = Line {
                context_id: list.context_id.clone(),
                generator: list.generator,
                item: item.clone(),
            };
            out.push_str(&serde_json::to_string(&line)?);
            out.push('\n');
        }
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

/// Reads JSON lines, grouping consecutive lines with the same context and generator.
pub fn read_generations(path: impl AsRef<Path>) -> Result<Vec<GenerationList>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lists: Vec<GenerationList> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let line: Line = serde_json::from_str(raw).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        match lists.last_mut() {
            Some(l) if l.context_id == line.context_id && l.generator == line.generator => l.items.push(line.item),
            _ => lists.push(GenerationList {
                context_id: line.context_id,
                generator: line.generator,
                items: vec![line.item],
            }),
        }
    }
    Ok(lists)
}

fn item(model: &Seq2Seq, value: &AttributeValue, hyp: &Hypothesis) -> GenerationItem {
    GenerationItem {
        attribute: model.attribute.describe(value),
        value: Some(value.clone()),
        tokens: model.vocab.decode(&hyp.tokens),
        score: hyp.log_prob,
        forward: None,
        reverse: None,
    }
}

/// Token ids of an item's text followed by `<eos>`.
pub fn item_ids(model: &Seq2Seq, item: &GenerationItem) -> Vec<TokenId> {
    model.vocab.encode_target(&item.tokens)
}

/// Decodes `source` once per attribute value (greedy by default).
pub fn generate_per_attribute(
    model: &Seq2Seq,
    context_id: &str,
    source: &[TokenId],
    values: &[AttributeValue],
    method: &DecodeMethod,
) -> Result<GenerationList> {
    let mut items = Vec::with_capacity(values.len());
    for value in values {
        model
            .attribute
            .input(value)
            .map_err(|e| Error::UnknownValue(format!("{}: {e}", model.attribute.describe(value))))?;
        let hyps = decode(model, source, value, method, DEFAULT_MAX_LEN)?;
        let best = hyps
            .first()
            .ok_or_else(|| Error::Empty("decoder produced no hypothesis".into()))?;
        items.push(item(model, value, best));
    }
    Ok(GenerationList {
        context_id: context_id.to_owned(),
        generator: Generator::Attribute,
        items,
    })
}

/// A list of `n` continuations for one attribute value by beam search or sampling.
pub fn generate_list(
    model: &Seq2Seq,
    context_id: &str,
    source: &[TokenId],
    value: &AttributeValue,
    method: &DecodeMethod,
) -> Result<GenerationList> {
    let hyps = decode(model, source, value, method, DEFAULT_MAX_LEN)?;
    let generator = match method {
        DecodeMethod::Sample { .. } => Generator::Sample,
        _ => Generator::Beam,
    };
    Ok(GenerationList {
        context_id: context_id.to_owned(),
        generator,
        items: hyps.iter().map(|h| item(model, value, h)).collect(),
    })
}
