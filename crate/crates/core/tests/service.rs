use std::collections::BTreeSet;

use storyctl_core::corpus::{FrameInventory, Sentiment, Vocabulary};
use storyctl_core::model::{forward_examples, AttributeEmbedder, AttributeValue, ModelConfig, Seq2Seq};
use storyctl_core::selection::{FramePredictor, PredictorConfig};
use storyctl_core::service::*;
use storyctl_core::synthetic::{lexicons, synthesize, SyntheticConfig};

fn vocab() -> Vocabulary {
    let words = ["sam", "went", "to", "the", "store", ".", "bought", "a", "lamp", "happily", "sadly", "at", "monday", "on"];
    Vocabulary::from_tokens(words.iter().map(|s| s.to_string()))
}

fn small() -> ModelConfig {
    ModelConfig { embed_dim: 6, hidden_dim: 6, frame_dim: 5, init_scale: 0.3, ..ModelConfig::default() }
}

fn frames_suggester() -> Suggester {
    let inv = FrameInventory::from_ranked(vec!["Buildings".into(), "Commerce_buy".into(), "Calendric_unit".into(), "Motion".into()]).unwrap();
    let model = Seq2Seq::new(small(), vocab(), AttributeEmbedder::frames(inv, 5).unwrap()).unwrap();
    let mut s = Suggester::new("toy", model);
    s.reverse = Some(Seq2Seq::new(ModelConfig { seed: 4, ..small() }, vocab(), AttributeEmbedder::none()).unwrap());
    s.predictor = Some(FramePredictor::new(PredictorConfig { hidden_dim: 4, ..PredictorConfig::default() }).unwrap());
    s.lexicons = Some(lexicons());
    s.frame_sets = vec![BTreeSet::from([0]), BTreeSet::from([1, 2]), BTreeSet::from([3]), BTreeSet::from([0, 1])];
    s
}

fn ctx() -> Vec<String> {
    vec!["Sam went to the store.".into(), "Sam saw a unicorn.".into()]
}

#[test]
fn explicit_sentiment_value() {
    let s = Suggester::new("toy", Seq2Seq::new(small(), vocab(), AttributeEmbedder::sentiment()).unwrap());
    let mut req = SuggestionRequest::new(ctx());
    req.value = Some(ValueSpec::Explicit("positive".into()));
    req.n = 1;
    let resp = s.suggest(&req).unwrap();
    assert_eq!(resp.suggestions.len(), 1);
    assert_eq!(resp.suggestions[0].value, Some(AttributeValue::Sentiment(Sentiment::Positive)));
    assert_eq!(resp.suggestions[0].attribute, "positive");
    assert!(resp.warnings.iter().any(|w| w.contains("unicorn") && w.contains("saw")));
    let json = serde_json::to_string(&resp).unwrap();
    assert_eq!(serde_json::from_str::<SuggestionResponse>(&json).unwrap(), resp);

    let mut all = SuggestionRequest::new(ctx());
    all.n = 3;
    let labels: Vec<String> = s.suggest(&all).unwrap().suggestions.into_iter().map(|x| x.attribute).collect();
    assert_eq!(labels, ["negative", "neutral", "positive"]);

    req.value = Some(ValueSpec::Explicit("ecstatic".into()));
    assert_eq!(s.suggest(&req).unwrap_err().code, ErrorCode::BadRequest);
    req.value = Some(ValueSpec::AutoPredict);
    assert_eq!(s.suggest(&req).unwrap_err().code, ErrorCode::NotImplemented);
    req.value = Some(ValueSpec::AutoRerank);
    assert_eq!(s.suggest(&req).unwrap_err().code, ErrorCode::NotImplemented);
    req.value = None;
    req.attribute = Some(storyctl_core::model::AttributeKind::Frames);
    assert_eq!(s.suggest(&req).unwrap_err().code, ErrorCode::BadRequest);
}

#[test]
fn request_validation() {
    let s = Suggester::new("toy", Seq2Seq::new(small(), vocab(), AttributeEmbedder::none()).unwrap());
    let mut req = SuggestionRequest::new(vec![]);
    assert_eq!(s.suggest(&req).unwrap_err().code, ErrorCode::BadRequest);
    req.context = vec!["a .".into(); 5];
    assert!(s.suggest(&req).is_err());
    req.context = ctx();
    req.n = 0;
    assert!(s.suggest(&req).is_err());
    req.n = 2;
    req.method = Method::Sample;
    req.temperature = Some(0.0);
    assert!(s.suggest(&req).is_err());
    req.temperature = None;
    assert_eq!(s.suggest(&req).unwrap().suggestions.len(), 2);
}

#[test]
fn auto_modes_and_determinism() {
    let s = frames_suggester();
    let info = s.attributes();
    assert!(info.auto_predict && info.auto_rerank);
    assert_eq!(info.frames.as_ref().unwrap().len(), 4);

    let mut req = SuggestionRequest::new(ctx());
    req.value = Some(ValueSpec::AutoPredict);
    let resp = s.suggest(&req).unwrap();
    assert_eq!(resp.suggestions.len(), 3);
    for sug in &resp.suggestions {
        match &sug.value {
            Some(AttributeValue::Frames(ids)) => assert_eq!(ids.len(), 1),
            other => panic!("expected a predicted frame, got {other:?}"),
        }
    }

    req.value = Some(ValueSpec::AutoRerank);
    let resp = s.suggest(&req).unwrap();
    assert_eq!(resp.suggestions.len(), 3);
    assert!(resp.suggestions.windows(2).all(|w| w[0].score >= w[1].score));

    req.value = Some(ValueSpec::Explicit("Buildings,Motion".into()));
    req.method = Method::Sample;
    req.seed = 17;
    let a = s.suggest(&req).unwrap();
    assert_eq!(a, s.suggest(&req).unwrap());
    assert_eq!(a.suggestions.len(), 3);
}

#[test]
fn checkpoint_roundtrip_preserves_perplexity() {
    let corpus = synthesize(&SyntheticConfig { stories: 20, ..SyntheticConfig::default() }).unwrap();
    let vocab = storyctl_core::corpus::build_vocab(&corpus.stories, 500).unwrap();
    let model = Seq2Seq::new(small(), vocab.clone(), AttributeEmbedder::sentiment()).unwrap();
    let examples = forward_examples(&corpus.stories, Some(&corpus.sidecar), &vocab, &model.attribute).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    model.save(&path).unwrap();
    let back = Seq2Seq::load(&path).unwrap();
    assert_eq!(back.params, model.params);
    assert!((back.perplexity(&examples).unwrap() - model.perplexity(&examples).unwrap()).abs() < 1e-12);
    assert!(back.vocab_warning(&vocab).is_none());
    assert!(back.vocab_warning(&self::vocab()).is_some());
}
