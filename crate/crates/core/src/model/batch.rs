use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::corpus::sidecar::AnnotationSidecar;
use crate::corpus::story::Story;
use crate::corpus::vocab::{TokenId, Vocabulary};
use crate::error::{Error, Result};
use crate::model::attribute::{AttributeEmbedder, AttributeValue, ZInput};

/// One training triple `(x, l, y)` with `y` terminated by `<eos>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub source: Vec<TokenId>,
    pub target: Vec<TokenId>,
    pub value: AttributeValue,
}

/// Forward examples: context as source, continuation as target.
pub fn forward_examples(
    stories: &[Story],
    sidecar: Option<&AnnotationSidecar>,
    vocab: &Vocabulary,
    embedder: &AttributeEmbedder,
) -> Result<Vec<Example>> {
    let annotations = match sidecar {
        Some(sc) => Some(sc.for_stories(stories)?),
        None => None,
    };
    stories
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let value = match &annotations {
                Some(a) => embedder.value_from_annotation(a[i], s)?,
                None if embedder.kind() == crate::model::AttributeKind::None => AttributeValue::None,
                None => return Err(Error::MissingAnnotations(vec![s.id.clone()])),
            };
            Ok(Example {
                id: s.id.clone(),
                source: vocab.encode_context(&s.context),
                target: vocab.encode_target(&s.continuation),
                value,
            })
        })
        .collect()
}

/// Reverse examples: continuation as source, the joined context as target.
pub fn reverse_examples(stories: &[Story], vocab: &Vocabulary) -> Vec<Example> {
    stories
        .iter()
        .map(|s| Example {
            id: s.id.clone(),
            source: vocab.encode(&s.continuation),
            target: vocab.encode_context(&s.context),
            value: AttributeValue::None,
        })
        .collect()
}

/// Time-major padded batch.
#[derive(Debug, Clone)]
pub(crate) struct Batch {
    pub size: usize,
    pub src_steps: usize,
    pub src: Vec<TokenId>,
    pub src_lens: Vec<usize>,
    pub tgt_steps: usize,
    pub tgt_in: Vec<TokenId>,
    pub tgt_out: Vec<TokenId>,
    pub weights: Vec<f64>,
    pub tokens: usize,
    pub z: Option<(Tensor, bool)>,
}

impl Batch {
    pub fn new(examples: &[&Example], vocab_size: usize, eos: TokenId, pad: TokenId, embedder: &AttributeEmbedder) -> Result<Self> {
        let size = examples.len();
        if size == 0 {
            return Err(Error::Empty("batch without examples".into()));
        }
        for e in examples {
            if e.source.is_empty() {
                return Err(Error::Empty(format!("example {} has an empty source", e.id)));
            }
            if e.target.is_empty() {
                return Err(Error::Empty(format!("example {} has an empty target", e.id)));
            }
            if let Some(bad) = e.source.iter().chain(&e.target).find(|&&t| t >= vocab_size) {
                return Err(Error::InvalidArgument(format!(
                    "example {}: token id {bad} outside vocabulary of {vocab_size}",
                    e.id
                )));
            }
        }
        let src_steps = examples.iter().map(|e| e.source.len()).max().unwrap_or(0);
        let tgt_steps = examples.iter().map(|e| e.target.len()).max().unwrap_or(0);
        let mut src = vec![pad; src_steps * size];
        let mut tgt_in = vec![pad; tgt_steps * size];
        let mut tgt_out = vec![pad; tgt_steps * size];
        let mut weights = vec![0.0; tgt_steps * size];
        for (b, e) in examples.iter().enumerate() {
            for (t, &id) in e.source.iter().enumerate() {
                src[t * size + b] = id;
            }
            for (t, &id) in e.target.iter().enumerate() {
                tgt_in[t * size + b] = if t == 0 { eos } else { e.target[t - 1] };
                tgt_out[t * size + b] = id;
                weights[t * size + b] = 1.0;
            }
        }
        let inputs = examples
            .iter()
            .map(|e| embedder.input(&e.value))
            .collect::<Result<Vec<ZInput>>>()?;
        Ok(Batch {
            size,
            src_steps,
            src,
            src_lens: examples.iter().map(|e| e.source.len()).collect(),
            tgt_steps,
            tgt_in,
            tgt_out,
            weights,
            tokens: examples.iter().map(|e| e.target.len()).sum(),
            z: ZInput::stack(&inputs)?,
        })
    }
}
