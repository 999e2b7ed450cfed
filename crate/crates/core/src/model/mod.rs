pub mod attribute;
pub mod batch;
mod network;
pub mod params;
pub mod seq2seq;
pub mod train;

pub use attribute::{rank_predicates, AttributeEmbedder, AttributeKind, AttributeValue, ZInput};
pub use batch::{forward_examples, reverse_examples, Example};
pub use params::{Lstm, ModelConfig, ModelParams, Params};
pub use seq2seq::{attend, Attention, AttributeEmbedding, DecoderState, EncodedSource, Seq2Seq};
pub use train::{train, EpochStats, TrainConfig, TrainReport};
