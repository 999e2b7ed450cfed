//! Automatic choice of frame values: reverse-model reranking and frame prediction.

pub mod predictor;
pub mod rerank;

pub use predictor::{
    frame_examples, frame_vector, predict_topk_frames, top_k, train_frame_predictor, FrameExample, FramePredictor,
    FrameVector, PredictorConfig, PredictorEpoch, PredictorReport,
};
pub use rerank::{rerank, rerank_frame_sets, Candidate, RerankConfig, DEFAULT_LAMBDA};
