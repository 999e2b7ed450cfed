use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use storyctl_core::corpus::{resolve_frames, Annotation, AnnotationSidecar, AnnotationSource, FrameInventory, Sentiment, Story, FRAME_SLOTS};
use storyctl_core::decoding::{DecodeMethod, Generator};
use storyctl_core::model::{AttributeEmbedder, ModelConfig, Seq2Seq};
use storyctl_core::selection::*;
use storyctl_core::Error;

fn candidates() -> impl Strategy<Value = Vec<(f64, usize, f64)>> {
    proptest::collection::vec((-20.0f64..0.0, 1usize..12, -20.0f64..0.0), 1..12)
}

fn to_cands(v: &[(f64, usize, f64)]) -> Vec<Candidate> {
    v.iter().map(|&(f, l, r)| Candidate { forward: f, length: l, reverse: r }).collect()
}

proptest! {
    #[test]
    fn lambda_zero_sorts_by_normalized_forward(v in candidates()) {
        let c = to_cands(&v);
        let got: Vec<usize> = rerank(&c, 0.0, c.len()).unwrap().into_iter().map(|x| x.0).collect();
        let mut expected: Vec<usize> = (0..c.len()).collect();
        expected.sort_by(|&a, &b| (c[b].forward / c[b].length as f64).total_cmp(&(c[a].forward / c[a].length as f64)));
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn shifting_every_score_keeps_the_ranking(v in candidates(), shift in -5i32..5, lambda in 0.0f64..3.0) {
        let c = to_cands(&v);
        let k = c.len();
        let base: Vec<usize> = rerank(&c, lambda, k).unwrap().into_iter().map(|x| x.0).collect();
        // Adding `shift · |y|` to each forward score adds `shift` to every combined score.
        let shifted: Vec<Candidate> = c.iter().map(|x| Candidate { forward: x.forward + f64::from(shift) * x.length as f64, ..*x }).collect();
        let moved: Vec<usize> = rerank(&shifted, lambda, k).unwrap().into_iter().map(|x| x.0).collect();
        let combined: Vec<f64> = c.iter().map(|x| x.combined(lambda)).collect();
        // Ties may only reorder when floating-point shifting breaks them.
        for (a, b) in base.iter().zip(&moved) {
            prop_assert!((combined[*a] - combined[*b]).abs() < 1e-9);
        }
    }
}

#[test]
fn identical_candidates_stay_adjacent_in_order() {
    let c = [
        Candidate { forward: -3.0, length: 3, reverse: -1.0 },
        Candidate { forward: -6.0, length: 3, reverse: -1.0 },
        Candidate { forward: -3.0, length: 3, reverse: -1.0 },
    ];
    let r: Vec<usize> = rerank(&c, 1.0, 3).unwrap().into_iter().map(|x| x.0).collect();
    assert_eq!(r, [0, 2, 1]);
}

#[test]
fn duplicate_frame_names_collapse() {
    let inv = FrameInventory::from_ranked(vec!["A".into(), "B".into()]).unwrap();
    let once = frame_vector(&resolve_frames(&["A", "B"], &inv));
    let twice = frame_vector(&resolve_frames(&["A", "B", "A", "B", "B"], &inv));
    assert_eq!(once, twice);
    let unknown = frame_vector(&resolve_frames(&["Z", "Y"], &inv));
    assert_eq!(unknown.ids(), [100]);
}

fn random_vector(rng: &mut ChaCha8Rng) -> FrameVector {
    let ids: BTreeSet<usize> = (0..rng.gen_range(0..4)).map(|_| rng.gen_range(0..FRAME_SLOTS)).collect();
    frame_vector(&ids)
}

#[test]
fn predictor_overfits_a_constant_target() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let target = frame_vector(&BTreeSet::from([5]));
    let make = |rng: &mut ChaCha8Rng, n: usize| -> Vec<FrameExample> {
        (0..n)
            .map(|_| FrameExample { context: (0..4).map(|_| random_vector(rng)).collect(), target: target.clone() })
            .collect()
    };
    let train = make(&mut rng, 60);
    let dev = make(&mut rng, 20);
    let cfg = PredictorConfig { max_epochs: 30, ..PredictorConfig::default() };
    let (p, report) = train_frame_predictor(&train, &dev, cfg).unwrap();
    assert!(report.best_dev_mse <= report.final_dev_mse);
    assert!((p.mse(&dev).unwrap() - report.best_dev_mse).abs() < 1e-12);
    for ex in train.iter().chain(&dev) {
        let scores = p.predict(&ex.context).unwrap();
        assert_eq!(scores.len(), FRAME_SLOTS);
        assert_eq!(predict_topk_frames(&p, &ex.context, 1).unwrap(), [5]);
    }
    let ctx = &dev[0].context;
    assert_eq!(predict_topk_frames(&p, ctx, 10).unwrap(), predict_topk_frames(&p, ctx, 10).unwrap());
    assert!(predict_topk_frames(&p, ctx, 0).is_err());
    assert_eq!(p.predict(&ctx[..2]).unwrap().len(), FRAME_SLOTS);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    p.save(&path).unwrap();
    assert_eq!(FramePredictor::load(&path).unwrap(), p);
}

fn story(id: &str) -> Story {
    let s = |t: &str| t.split_whitespace().map(str::to_owned).collect::<Vec<_>>();
    Story::new(id, vec![s("a b"), s("b c"), s("c a"), s("a a"), s("b b")]).unwrap()
}

#[test]
fn frame_examples_need_context_frames() {
    let inv = FrameInventory::from_ranked(vec!["A".into()]).unwrap();
    let ann = |id: &str, ctx: Option<Vec<Vec<String>>>| Annotation {
        id: id.into(),
        sentiment: Sentiment::Neutral,
        length: 2,
        predicates: vec![],
        frames: vec!["A".into()],
        cluster: None,
        context_frames: ctx,
        source: AnnotationSource::Ingested,
    };
    let ok = AnnotationSidecar::new(vec![ann("s1", Some(vec![vec!["A".into()], vec![], vec![], vec!["Q".into()]]))]).unwrap();
    let ex = frame_examples(&[story("s1")], &ok, &inv).unwrap();
    assert_eq!(ex[0].context[0].ids(), [0]);
    assert_eq!(ex[0].context[3].ids(), [100]);
    assert_eq!(ex[0].target.ids(), [0]);
    let bad = AnnotationSidecar::new(vec![ann("s1", None)]).unwrap();
    assert!(matches!(frame_examples(&[story("s1")], &bad, &inv), Err(Error::MissingAnnotations(_))));
}

#[test]
fn reranked_frame_generations_record_both_scores() {
    let vocab = storyctl_core::corpus::Vocabulary::from_tokens(["a", "b", "c"].map(String::from));
    let cfg = ModelConfig { embed_dim: 4, hidden_dim: 4, frame_dim: 4, init_scale: 0.5, ..ModelConfig::default() };
    let inv = FrameInventory::from_ranked((0..6).map(|i| format!("F{i}")).collect()).unwrap();
    let fwd = Seq2Seq::new(cfg.clone(), vocab.clone(), AttributeEmbedder::frames(inv, 4).unwrap()).unwrap();
    let rev = Seq2Seq::new(ModelConfig { seed: 9, ..cfg }, vocab, AttributeEmbedder::none()).unwrap();
    let sets: Vec<BTreeSet<usize>> = (0..6).map(|i| BTreeSet::from([i])).collect();
    let st = story("x");
    let rc = RerankConfig { k: 3, ..RerankConfig::default() };
    let list = rerank_frame_sets(&fwd, &rev, "x", &st.context, &sets, &DecodeMethod::Greedy, &rc).unwrap();
    assert_eq!(list.generator, Generator::Rerank);
    assert_eq!(list.items.len(), 3);
    for w in list.items.windows(2) {
        assert!(w[0].score >= w[1].score);
    }
    for it in &list.items {
        let f = it.forward.unwrap();
        let r = it.reverse.unwrap();
        let len = it.tokens.len() as f64 + 1.0;
        assert!(it.score == f / len + r || it.tokens.len() == 30);
    }
    assert!(rerank_frame_sets(&rev, &rev, "x", &st.context, &sets, &DecodeMethod::Greedy, &rc).is_err());
    let too_many = RerankConfig { k: 7, ..rc };
    assert!(rerank_frame_sets(&fwd, &rev, "x", &st.context, &sets, &DecodeMethod::Greedy, &too_many).is_err());
}
