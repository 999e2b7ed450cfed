//! Attribute-conditioned story continuation: a small autodiff engine, the
//! corpus pipeline, an attentional seq2seq model with control attributes,
//! decoding, evaluation metrics, attribute-value selection and the
//! suggestion logic behind the HTTP service.

pub mod autodiff;
pub mod corpus;
pub mod decoding;
pub mod error;
pub mod metrics;
pub mod model;
pub mod selection;
pub mod service;
pub mod synthetic;

pub use corpus::{AnnotationSidecar, FrameInventory, Lexicons, Sentiment, Story, Vocabulary};
pub use decoding::{DecodeMethod, GenerationList};
pub use error::{Error, Result};
pub use model::{AttributeEmbedder, AttributeKind, AttributeValue, ModelConfig, Seq2Seq, TrainConfig};
pub use selection::{FramePredictor, PredictorConfig, RerankConfig};
pub use service::{Suggester, SuggestionRequest, SuggestionResponse};
