//! Corpus-to-report steps behind the subcommands.

use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use storyctl_core::corpus::embeddings::predicate_sum;
use storyctl_core::corpus::{
    annotate_story, bow_embed, build_vocab, fit_pca, kmeans, load_artifact, save_artifact, top_frame_sets,
    AnnotationSidecar, ClusterModel, EmbeddingTable, FrameId, FrameInventory, Lexicons, LengthScheme, PcaProjection,
    SentenceEncoder, Story,
};
use storyctl_core::decoding::{generate_list, generate_per_attribute, DecodeMethod, GenerationList, Generator};
use storyctl_core::metrics::{
    controllability_report, oracle_row, set_row, ControlConfig, Evaluator, MatchTable, OracleRow, SelfBleuMode, SetRow,
};
use storyctl_core::model::{
    forward_examples, rank_predicates, reverse_examples, train, AttributeEmbedder, AttributeKind, AttributeValue,
    Seq2Seq, TrainReport,
};
use storyctl_core::selection::{
    frame_examples, rerank_frame_sets, top_k, train_frame_predictor, FramePredictor, PredictorReport,
};

use crate::config::Config;

pub const CLUSTER_KIND: &str = "cluster-model";
pub const PCA_KIND: &str = "pca-projection";

pub fn save_clusters(path: impl AsRef<Path>, model: &ClusterModel) -> Result<()> {
    Ok(save_artifact(path, CLUSTER_KIND, model)?)
}

pub fn load_clusters(path: impl AsRef<Path>) -> Result<ClusterModel> {
    Ok(load_artifact(path, CLUSTER_KIND)?)
}

pub fn save_pca(path: impl AsRef<Path>, pca: &PcaProjection) -> Result<()> {
    Ok(save_artifact(path, PCA_KIND, pca)?)
}

pub fn load_pca(path: impl AsRef<Path>) -> Result<PcaProjection> {
    Ok(load_artifact(path, PCA_KIND)?)
}

/// Heuristic annotation of `stories`. Records already present in `existing`
/// are kept as they are; the rest are filled in.
pub fn annotate(stories: &[Story], lexicons: &Lexicons, existing: Option<AnnotationSidecar>) -> Result<AnnotationSidecar> {
    let existing = existing.unwrap_or_default();
    let mut filled = 0;
    let records = stories
        .iter()
        .map(|s| match existing.get(&s.id) {
            Some(a) => a.clone(),
            None => {
                filled += 1;
                annotate_story(s, lexicons)
            }
        })
        .collect();
    if !existing.is_empty() && filled > 0 {
        warn!("{filled} stories had no ingested annotation and were labeled heuristically");
    }
    Ok(AnnotationSidecar::new(records)?)
}

fn continuation_vectors(stories: &[Story], embeddings: &EmbeddingTable) -> Result<Vec<Vec<f64>>> {
    Ok(stories
        .iter()
        .map(|s| bow_embed(&s.continuation, embeddings))
        .collect::<storyctl_core::Result<_>>()?)
}

/// k-means over bag-of-embeddings vectors of the continuations.
pub fn fit_clusters(stories: &[Story], embeddings: &EmbeddingTable, cfg: &Config) -> Result<ClusterModel> {
    let vectors = continuation_vectors(stories, embeddings)?;
    let (model, trace) = kmeans(&vectors, cfg.corpus.clusters, cfg.corpus.seed, cfg.corpus.kmeans_iterations)?;
    info!(
        "k-means: k = {}, {} iterations, objective {:.4}, converged {}",
        model.k(),
        trace.iterations,
        trace.objective.last().copied().unwrap_or(f64::NAN),
        trace.converged
    );
    Ok(model)
}

/// Writes each story's nearest cluster into its annotation.
pub fn assign_clusters(
    sidecar: &mut AnnotationSidecar,
    stories: &[Story],
    model: &ClusterModel,
    embeddings: &EmbeddingTable,
) -> Result<()> {
    for (story, v) in stories.iter().zip(continuation_vectors(stories, embeddings)?) {
        let ann = sidecar
            .get_mut(&story.id)
            .ok_or_else(|| anyhow!("story {} has no annotation", story.id))?;
        ann.cluster = Some(model.assign(&v));
    }
    Ok(())
}

/// PCA over summed predicate embeddings of the annotated continuations.
pub fn fit_predicate_pca(
    stories: &[Story],
    sidecar: &AnnotationSidecar,
    embeddings: &EmbeddingTable,
    k: usize,
) -> Result<PcaProjection> {
    let rows: Vec<Vec<f64>> = sidecar
        .for_stories(stories)?
        .into_iter()
        .filter(|a| !a.predicates.is_empty())
        .map(|a| predicate_sum(&a.predicates, embeddings))
        .collect();
    let k = if k > embeddings.dim() {
        warn!("pca dimension {k} exceeds embedding width {}; using {}", embeddings.dim(), embeddings.dim());
        embeddings.dim()
    } else {
        k
    };
    Ok(fit_pca(&rows, k)?)
}

/// Side inputs some attribute kinds need.
#[derive(Debug, Default)]
pub struct Resources {
    pub embeddings: Option<EmbeddingTable>,
    pub pca: Option<PcaProjection>,
    pub clusters: Option<ClusterModel>,
}

impl Resources {
    fn embeddings(&self, kind: AttributeKind) -> Result<&EmbeddingTable> {
        self.embeddings
            .as_ref()
            .ok_or_else(|| anyhow!("the {kind} attribute needs --embeddings"))
    }
}

pub fn build_embedder(
    kind: AttributeKind,
    train_stories: &[Story],
    sidecar: &AnnotationSidecar,
    vocab: &storyctl_core::corpus::Vocabulary,
    res: &Resources,
    cfg: &Config,
) -> Result<AttributeEmbedder> {
    Ok(match kind {
        AttributeKind::None => AttributeEmbedder::none(),
        AttributeKind::Sentiment => AttributeEmbedder::sentiment(),
        AttributeKind::Length3 => AttributeEmbedder::length(LengthScheme::ThreeBin),
        AttributeKind::Length30 => AttributeEmbedder::length(LengthScheme::PerLength),
        AttributeKind::Clusters => {
            let k = res.clusters.as_ref().map_or(cfg.corpus.clusters, ClusterModel::k);
            AttributeEmbedder::clusters(k)?
        }
        AttributeKind::Frames => {
            let anns = sidecar.for_stories(train_stories)?;
            let inv = FrameInventory::build(anns.iter().map(|a| a.frames.as_slice()));
            info!("frame inventory of {} frames", inv.len());
            AttributeEmbedder::frames(inv, cfg.model.frame_dim)?
        }
        AttributeKind::Predicates => {
            let pca = res.pca.clone().ok_or_else(|| anyhow!("the predicates attribute needs --pca"))?;
            let ranked = rank_predicates(sidecar.for_stories(train_stories)?);
            let table = res.embeddings(kind)?.restricted(|t| vocab.contains(t) || ranked.iter().any(|p| p == t));
            AttributeEmbedder::predicates(table, pca, ranked)?
        }
        AttributeKind::Bow => AttributeEmbedder::bow(res.embeddings(kind)?.restricted(|t| vocab.contains(t))),
    })
}

/// Builds the vocabulary and attribute embedder from the training split and
/// trains a forward model.
pub fn train_forward(
    kind: AttributeKind,
    train_stories: &[Story],
    dev_stories: &[Story],
    sidecar: &AnnotationSidecar,
    res: &Resources,
    cfg: &Config,
) -> Result<(Seq2Seq, TrainReport)> {
    let vocab = build_vocab(train_stories, cfg.corpus.vocab_size)?;
    let embedder = build_embedder(kind, train_stories, sidecar, &vocab, res, cfg)?;
    let model = Seq2Seq::new(cfg.model.clone(), vocab, embedder)?;
    let tr = forward_examples(train_stories, Some(sidecar), &model.vocab, &model.attribute)?;
    let dv = forward_examples(dev_stories, Some(sidecar), &model.vocab, &model.attribute)?;
    info!("training {kind} model on {} examples, {} dev", tr.len(), dv.len());
    Ok(train(model, &tr, &dv, &cfg.train)?)
}

/// Continuation-to-context model scored during reranking.
pub fn train_reverse(train_stories: &[Story], dev_stories: &[Story], cfg: &Config) -> Result<(Seq2Seq, TrainReport)> {
    let vocab = build_vocab(train_stories, cfg.corpus.vocab_size)?;
    let model = Seq2Seq::new(cfg.model.clone(), vocab, AttributeEmbedder::none())?;
    let tr = reverse_examples(train_stories, &model.vocab);
    let dv = reverse_examples(dev_stories, &model.vocab);
    Ok(train(model, &tr, &dv, &cfg.train)?)
}

pub fn frame_inventory(model: &Seq2Seq) -> Result<&FrameInventory> {
    model
        .attribute
        .frame_inventory()
        .ok_or_else(|| anyhow!("expected a frames model, got {}", model.attribute.kind()))
}

pub fn train_predictor(
    train_stories: &[Story],
    dev_stories: &[Story],
    sidecar: &AnnotationSidecar,
    inventory: &FrameInventory,
    cfg: &Config,
) -> Result<(FramePredictor, PredictorReport)> {
    let tr = frame_examples(train_stories, sidecar, inventory)?;
    let dv = frame_examples(dev_stories, sidecar, inventory)?;
    Ok(train_frame_predictor(&tr, &dv, cfg.predictor.clone())?)
}

/// The most frequent continuation frame sets of `stories`, used as the
/// reranking pool.
pub fn frame_pool(model: &Seq2Seq, stories: &[Story], sidecar: &AnnotationSidecar, n: usize) -> Result<Vec<BTreeSet<FrameId>>> {
    let inv = frame_inventory(model)?;
    let anns = sidecar.for_stories(stories)?;
    Ok(top_frame_sets(anns.iter().map(|a| a.frames.as_slice()), inv, n))
}

/// Decoding choice assembled from `--beam`, `--temperature`, `--n` and `--seed`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decoding {
    pub beam: usize,
    pub temperature: Option<f64>,
    pub n: usize,
    pub seed: u64,
}

impl Default for Decoding {
    fn default() -> Self {
        Decoding { beam: 1, temperature: None, n: 1, seed: 0 }
    }
}

impl Decoding {
    /// One continuation per call.
    pub fn single(&self) -> DecodeMethod {
        match self.temperature {
            Some(temperature) => DecodeMethod::Sample { temperature, n: 1, seed: self.seed },
            None if self.beam > 1 => DecodeMethod::Beam { width: self.beam, keep: 1 },
            None => DecodeMethod::Greedy,
        }
    }

    /// `n` continuations per call.
    pub fn list(&self) -> DecodeMethod {
        match self.temperature {
            Some(temperature) => DecodeMethod::Sample { temperature, n: self.n, seed: self.seed },
            None if self.n == 1 && self.beam == 1 => DecodeMethod::Greedy,
            None => DecodeMethod::Beam { width: self.beam.max(self.n), keep: self.n },
        }
    }
}

/// What `generate` produces for each context.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenerateMode {
    /// One continuation for each attribute value.
    PerAttribute { limit: usize },
    /// `n` continuations under the gold value (or none for an unconditioned model).
    Oracle,
    /// One continuation for each of the top-`n` predicted frames.
    Predicted,
}

pub fn generate(
    model: &Seq2Seq,
    stories: &[Story],
    sidecar: Option<&AnnotationSidecar>,
    predictor: Option<&FramePredictor>,
    mode: GenerateMode,
    dec: &Decoding,
) -> Result<Vec<GenerationList>> {
    match mode {
        GenerateMode::PerAttribute { limit } => {
            let values = model.attribute.enumerate_values(limit)?;
            let method = dec.single();
            stories
                .iter()
                .map(|s| {
                    let src = model.vocab.encode_context(&s.context);
                    Ok(generate_per_attribute(model, &s.id, &src, &values, &method)?)
                })
                .collect()
        }
        GenerateMode::Oracle => {
            let sidecar = match (sidecar, model.attribute.kind()) {
                (None, AttributeKind::None) => None,
                (None, kind) => bail!("gold {kind} values need --sidecar"),
                (s, _) => s,
            };
            let examples = forward_examples(stories, sidecar, &model.vocab, &model.attribute)?;
            let method = dec.list();
            examples
                .iter()
                .map(|ex| Ok(generate_list(model, &ex.id, &ex.source, &ex.value, &method)?))
                .collect()
        }
        GenerateMode::Predicted => {
            let predictor = predictor.ok_or_else(|| anyhow!("predicted frames need --predictor"))?;
            let sidecar = sidecar.ok_or_else(|| anyhow!("predicted frames need --sidecar with context frames"))?;
            let inv = frame_inventory(model)?;
            let examples = frame_examples(stories, sidecar, inv)?;
            let method = dec.single();
            stories
                .iter()
                .zip(&examples)
                .map(|(s, ex)| {
                    let mut scores = predictor.predict(&ex.context)?;
                    scores.truncate(inv.len());
                    let values: Vec<AttributeValue> = top_k(&scores, dec.n.min(inv.len()))?
                        .into_iter()
                        .map(|id| AttributeValue::Frames(BTreeSet::from([id])))
                        .collect();
                    let src = model.vocab.encode_context(&s.context);
                    Ok(generate_per_attribute(model, &s.id, &src, &values, &method)?)
                })
                .collect()
        }
    }
}

/// Reranked generations over the frame-set pool for every story.
pub fn rerank_corpus(
    forward: &Seq2Seq,
    reverse: &Seq2Seq,
    stories: &[Story],
    pool: &[BTreeSet<FrameId>],
    dec: &Decoding,
    cfg: &Config,
) -> Result<Vec<GenerationList>> {
    let method = dec.single();
    stories
        .iter()
        .map(|s| Ok(rerank_frame_sets(forward, reverse, &s.id, &s.context, pool, &method, &cfg.rerank)?))
        .collect()
}

pub fn control_table(
    model: &Seq2Seq,
    stories: &[Story],
    sidecar: Option<&AnnotationSidecar>,
    lexicons: &Lexicons,
    clusters: Option<(&ClusterModel, &EmbeddingTable)>,
    cfg: ControlConfig,
) -> Result<MatchTable> {
    let mut ev = Evaluator::new(lexicons);
    if let Some((c, emb)) = clusters {
        ev = ev.with_clusters(c, SentenceEncoder::EmbeddingMean(emb));
    }
    Ok(controllability_report(model, stories, sidecar, &ev, &cfg)?)
}

pub fn oracle_rows(
    models: &[(String, Seq2Seq)],
    stories: &[Story],
    sidecar: Option<&AnnotationSidecar>,
    dec: &Decoding,
) -> Result<Vec<OracleRow>> {
    let method = dec.single();
    models
        .iter()
        .map(|(name, m)| oracle_row(m, name, stories, sidecar, &method).with_context(|| format!("oracle row {name}")))
        .collect()
}

pub fn set_rows(systems: &[(String, Vec<GenerationList>)], stories: &[Story], mode: SelfBleuMode) -> Result<Vec<SetRow>> {
    systems
        .iter()
        .map(|(name, lists)| set_row(name, lists, stories, mode).with_context(|| format!("set row {name}")))
        .collect()
}

/// Label of a generation file's system for reports.
pub fn generator_label(lists: &[GenerationList]) -> &'static str {
    match lists.first().map(|l| l.generator) {
        Some(Generator::Beam) => "BS",
        Some(Generator::Sample) => "TS",
        Some(Generator::Attribute) => "attribute",
        Some(Generator::Rerank) => "rerank",
        None => "empty",
    }
}
