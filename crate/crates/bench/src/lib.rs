//! Fixtures shared by the benchmarks.

use storyctl_core::corpus::{build_vocab, Story};
use storyctl_core::model::{forward_examples, AttributeEmbedder, Example, ModelConfig, Seq2Seq};
use storyctl_core::synthetic::{synthesize, SyntheticConfig};

pub struct Fixture {
    pub stories: Vec<Story>,
    pub model: Seq2Seq,
    pub examples: Vec<Example>,
}

/// An untrained sentiment model at the default sizes over a small synthetic corpus.
pub fn fixture(stories: usize) -> Fixture {
    let corpus = synthesize(&SyntheticConfig { stories, ..SyntheticConfig::default() }).expect("synthetic corpus");
    let vocab = build_vocab(&corpus.stories, 500).expect("vocabulary");
    let model = Seq2Seq::new(ModelConfig::default(), vocab, AttributeEmbedder::sentiment()).expect("model");
    let examples =
        forward_examples(&corpus.stories, Some(&corpus.sidecar), &model.vocab, &model.attribute).expect("examples");
    Fixture { stories: corpus.stories, model, examples }
}
