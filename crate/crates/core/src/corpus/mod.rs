pub mod annotate;
pub mod artifact;
pub mod embeddings;
pub mod frames;
pub mod kmeans;
pub mod length;
pub mod pca;
pub mod sidecar;
pub mod story;
pub mod vocab;

pub use annotate::{annotate_heuristic, Lexicons, SentenceAnnotation, Sentiment};
pub use artifact::{load_artifact, save_artifact, SCHEMA_VERSION};
pub use embeddings::{bow_counts, bow_embed, predicate_vector, BowMode, EmbeddingTable, PredicateVector, SentenceEncoder};
pub use frames::{resolve_frames, top_frame_sets, FrameId, FrameInventory, CATCH_ALL, FRAME_SLOTS};
pub use kmeans::{kmeans, ClusterModel, KmeansTrace};
pub use length::{bin_length, LengthScheme, MAX_SENTENCE_LEN};
pub use pca::{fit_pca, PcaProjection};
pub use sidecar::{annotate_corpus, annotate_story, Annotation, AnnotationSidecar, AnnotationSource};
pub use story::{load_corpus, tokenize_sentence, write_corpus, Story, CONTEXT_SENTENCES};
pub use vocab::{build_vocab, TokenId, Vocabulary, EOS, PAD, UNK};
