use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;
use storyctl_core::corpus::{load_corpus, AnnotationSidecar, EmbeddingTable, Lexicons, Story};
use storyctl_core::decoding::{read_generations, write_generations};
use storyctl_core::metrics::{oracle_table, set_table, ControlConfig, SelfBleuMode, TargetPlan};
use storyctl_core::model::{AttributeKind, Seq2Seq};
use storyctl_core::selection::FramePredictor;
use storyctl_core::service::Suggester;
use storyctl_core::synthetic::{synthesize, SyntheticConfig};

use crate::config::Config;
use crate::pipeline::{self, Decoding, GenerateMode, Resources};
use crate::server::{self, AppState};

#[derive(Debug, Parser)]
#[command(name = "storyctl", version, about = "Attribute-controlled story continuation")]
pub struct Cli {
    /// TOML file with [corpus], [model], [train], [predictor] and [rerank] sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Control attribute: sentiment, length3, length30, predicates, frames, clusters, bow or none.
    #[arg(long, global = true)]
    pub attribute: Option<AttributeKind>,
    /// Beam width.
    #[arg(long, global = true)]
    pub beam: Option<usize>,
    /// Sample with this temperature instead of searching.
    #[arg(long, global = true)]
    pub temperature: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the bundled synthetic corpus with its lexicons, embeddings and sidecar.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        stories: usize,
        #[arg(long, default_value_t = 50)]
        dev: usize,
    },
    /// Label continuations with sentiment, length, predicates and frames.
    Annotate {
        #[arg(long, required = true)]
        corpus: Vec<PathBuf>,
        #[arg(long)]
        lexicons: PathBuf,
        /// Ingested annotations to keep; missing stories are labeled heuristically.
        #[arg(long)]
        ingest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit k-means on continuation embeddings and write cluster ids into the sidecar.
    Cluster {
        /// Stories the clusters are fitted on.
        #[arg(long)]
        corpus: PathBuf,
        /// Stories to label; defaults to --corpus.
        #[arg(long)]
        assign: Vec<PathBuf>,
        #[arg(long)]
        sidecar: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Where the labeled sidecar goes; defaults to overwriting --sidecar.
        #[arg(long)]
        sidecar_out: Option<PathBuf>,
    },
    /// Fit the PCA projection of predicate embeddings.
    FitPca {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        sidecar: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a forward model conditioned on --attribute.
    Train {
        #[command(flatten)]
        data: TrainData,
        #[arg(long)]
        sidecar: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        pca: Option<PathBuf>,
        #[arg(long)]
        clusters: Option<PathBuf>,
    },
    /// Train the continuation-to-context model used for reranking.
    TrainReverse {
        #[command(flatten)]
        data: TrainData,
    },
    /// Train the next-sentence frame predictor.
    TrainFramePredictor {
        #[command(flatten)]
        data: TrainData,
        #[arg(long)]
        sidecar: PathBuf,
        /// Frames model whose inventory the predictor uses.
        #[arg(long)]
        model: PathBuf,
    },
    /// Generate continuations for every story of a corpus.
    Generate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        sidecar: Option<PathBuf>,
        #[arg(long)]
        predictor: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Mode::PerAttribute)]
        mode: Mode,
        /// Continuations per context for oracle and predicted modes.
        #[arg(long, default_value_t = 1)]
        n: usize,
        /// Most values enumerated for predicates and frames.
        #[arg(long, default_value_t = 100)]
        limit: usize,
        #[arg(long)]
        out: PathBuf,
    },
    #[command(subcommand)]
    Evaluate(Evaluate),
    /// Generate over the most frequent frame sets and keep the best by forward and reverse score.
    Rerank {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        reverse: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Stories whose frame sets form the candidate pool.
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        sidecar: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve suggestions over HTTP.
    Serve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        reverse: Option<PathBuf>,
        #[arg(long)]
        predictor: Option<PathBuf>,
        #[arg(long)]
        lexicons: Option<PathBuf>,
        /// Stories whose frame sets form the auto-rerank pool (with --sidecar).
        #[arg(long)]
        pool: Option<PathBuf>,
        #[arg(long)]
        sidecar: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
}

#[derive(Debug, Args)]
pub struct TrainData {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch statistics as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    PerAttribute,
    Oracle,
    Predicted,
}

#[derive(Debug, Subcommand)]
pub enum Evaluate {
    /// Controllability tables: generate under target values and re-annotate.
    Control {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        sidecar: Option<PathBuf>,
        #[arg(long)]
        lexicons: PathBuf,
        #[arg(long)]
        clusters: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        limit: usize,
        /// Decode every value for every context instead of the default plan.
        #[arg(long)]
        every_value: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Perplexity and single-continuation scores under gold attribute values.
    Oracle {
        /// NAME=PATH of a model checkpoint; repeatable.
        #[arg(long = "model", required = true)]
        models: Vec<String>,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        sidecar: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Max/Avg BLEU and ROUGE and Self-BLEU of generation sets.
    Sets {
        /// NAME=PATH of a generations file; repeatable.
        #[arg(long = "generations", required = true)]
        generations: Vec<String>,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum, default_value_t = SelfBleu::Pairwise)]
        self_bleu: SelfBleu,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelfBleu {
    Pairwise,
    MultiReference,
}

impl From<SelfBleu> for SelfBleuMode {
    fn from(m: SelfBleu) -> Self {
        match m {
            SelfBleu::Pairwise => SelfBleuMode::Pairwise,
            SelfBleu::MultiReference => SelfBleuMode::MultiReference,
        }
    }
}

fn stories(path: &Path) -> Result<Vec<Story>> {
    load_corpus(path).with_context(|| format!("loading corpus {}", path.display()))
}

fn sidecar(path: &Path) -> Result<AnnotationSidecar> {
    AnnotationSidecar::load(path).with_context(|| format!("loading sidecar {}", path.display()))
}

fn model(path: &Path) -> Result<Seq2Seq> {
    Seq2Seq::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn named(spec: &str) -> Result<(String, PathBuf)> {
    let (name, path) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("expected NAME=PATH, got {spec:?}"))?;
    Ok((name.to_owned(), PathBuf::from(path)))
}

impl Cli {
    fn config(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        if let Some(seed) = self.seed {
            cfg.train.seed = seed;
            cfg.model.seed = seed;
            cfg.predictor.seed = seed;
        }
        Ok(cfg)
    }

    fn decoding(&self, n: usize) -> Result<Decoding> {
        let beam = self.beam.unwrap_or(1);
        if beam == 0 {
            bail!("--beam must be at least 1");
        }
        if let Some(t) = self.temperature {
            if !(t > 0.0 && t.is_finite()) {
                bail!("--temperature must be positive, got {t}");
            }
        }
        Ok(Decoding {
            beam,
            temperature: self.temperature,
            n,
            seed: self.seed.unwrap_or(0),
        })
    }

    fn check_kind(&self, m: &Seq2Seq) -> Result<()> {
        match self.attribute {
            Some(k) if k != m.attribute.kind() => bail!("model is conditioned on {}, not {k}", m.attribute.kind()),
            _ => Ok(()),
        }
    }
}

fn save_report<T: Serialize>(path: Option<&PathBuf>, report: &T) -> Result<()> {
    match path {
        Some(p) => write_json(p, report),
        None => Ok(()),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = cli.config()?;
    match &cli.command {
        Command::Synth { out, stories: n, dev } => {
            let corpus = synthesize(&SyntheticConfig {
                stories: *n,
                seed: cli.seed.unwrap_or(SyntheticConfig::default().seed),
                ..SyntheticConfig::default()
            })?;
            fs::create_dir_all(out)?;
            let files = corpus.write(out, *dev)?;
            println!("{}", serde_json::to_string_pretty(&files)?);
        }
        Command::Annotate { corpus, lexicons, ingest, out } => {
            let mut all = Vec::new();
            for p in corpus {
                all.extend(stories(p)?);
            }
            let lex = Lexicons::load(lexicons)?;
            let existing = ingest.as_deref().map(sidecar).transpose()?;
            let sc = pipeline::annotate(&all, &lex, existing)?;
            sc.save(out)?;
            info!("annotated {} stories", sc.len());
        }
        Command::Cluster { corpus, assign, sidecar: sc_path, embeddings, k, out, sidecar_out } => {
            let mut cfg = cfg.clone();
            if let Some(k) = k {
                cfg.corpus.clusters = *k;
            }
            let emb = EmbeddingTable::load(embeddings)?;
            let fit_on = stories(corpus)?;
            let model = pipeline::fit_clusters(&fit_on, &emb, &cfg)?;
            pipeline::save_clusters(out, &model)?;
            let mut sc = sidecar(sc_path)?;
            let targets = if assign.is_empty() {
                fit_on
            } else {
                let mut v = Vec::new();
                for p in assign {
                    v.extend(stories(p)?);
                }
                v
            };
            pipeline::assign_clusters(&mut sc, &targets, &model, &emb)?;
            sc.save(sidecar_out.as_ref().unwrap_or(sc_path))?;
        }
        Command::FitPca { corpus, sidecar: sc, embeddings, k, out } => {
            let emb = EmbeddingTable::load(embeddings)?;
            let pca = pipeline::fit_predicate_pca(&stories(corpus)?, &sidecar(sc)?, &emb, k.unwrap_or(cfg.corpus.pca_dim))?;
            pipeline::save_pca(out, &pca)?;
        }
        Command::Train { data, sidecar: sc, embeddings, pca, clusters } => {
            let kind = cli.attribute.ok_or_else(|| anyhow!("train needs --attribute"))?;
            let res = Resources {
                embeddings: embeddings.as_deref().map(EmbeddingTable::load).transpose()?,
                pca: pca.as_deref().map(pipeline::load_pca).transpose()?,
                clusters: clusters.as_deref().map(pipeline::load_clusters).transpose()?,
            };
            let (m, report) =
                pipeline::train_forward(kind, &stories(&data.train)?, &stories(&data.dev)?, &sidecar(sc)?, &res, &cfg)?;
            m.save(&data.out)?;
            info!("best dev perplexity {:.3} at epoch {}", report.best_dev_perplexity, report.best_epoch);
            save_report(data.report.as_ref(), &report)?;
        }
        Command::TrainReverse { data } => {
            let (m, report) = pipeline::train_reverse(&stories(&data.train)?, &stories(&data.dev)?, &cfg)?;
            m.save(&data.out)?;
            save_report(data.report.as_ref(), &report)?;
        }
        Command::TrainFramePredictor { data, sidecar: sc, model: mp } => {
            let m = model(mp)?;
            let inv = pipeline::frame_inventory(&m)?;
            let (p, report) =
                pipeline::train_predictor(&stories(&data.train)?, &stories(&data.dev)?, &sidecar(sc)?, inv, &cfg)?;
            p.save(&data.out)?;
            save_report(data.report.as_ref(), &report)?;
        }
        Command::Generate { model: mp, corpus, sidecar: sc, predictor, mode, n, limit, out } => {
            let m = model(mp)?;
            cli.check_kind(&m)?;
            let sc = sc.as_deref().map(sidecar).transpose()?;
            let pred = predictor.as_deref().map(FramePredictor::load).transpose()?;
            let mode = match mode {
                Mode::PerAttribute => GenerateMode::PerAttribute { limit: *limit },
                Mode::Oracle => GenerateMode::Oracle,
                Mode::Predicted => GenerateMode::Predicted,
            };
            let lists = pipeline::generate(&m, &stories(corpus)?, sc.as_ref(), pred.as_ref(), mode, &cli.decoding(*n)?)?;
            write_generations(out, &lists)?;
            info!("wrote {} generation lists to {}", lists.len(), out.display());
        }
        Command::Evaluate(ev) => evaluate(&cli, ev)?,
        Command::Rerank { model: mp, reverse, corpus, pool, sidecar: sc, out } => {
            let fwd = model(mp)?;
            let rev = model(reverse)?;
            let sc = sidecar(sc)?;
            let pool = pipeline::frame_pool(&fwd, &stories(pool)?, &sc, cfg.rerank.candidate_sets)?;
            let lists = pipeline::rerank_corpus(&fwd, &rev, &stories(corpus)?, &pool, &cli.decoding(1)?, &cfg)?;
            write_generations(out, &lists)?;
        }
        Command::Serve { model: mp, reverse, predictor, lexicons, pool, sidecar: sc, addr } => {
            let sources = ServeSources {
                model: mp.clone(),
                reverse: reverse.clone(),
                predictor: predictor.clone(),
                lexicons: lexicons.clone(),
                pool: pool.clone(),
                sidecar: sc.clone(),
                cfg: cfg.clone(),
            };
            let suggester = sources.load()?;
            cli.check_kind(&suggester.model)?;
            let state = AppState::new(suggester).with_loader(Arc::new(move || sources.load()));
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(server::serve(state, addr))?;
        }
    }
    Ok(())
}

/// Paths a server loads its models from, kept for reloads.
#[derive(Debug, Clone)]
pub struct ServeSources {
    pub model: PathBuf,
    pub reverse: Option<PathBuf>,
    pub predictor: Option<PathBuf>,
    pub lexicons: Option<PathBuf>,
    pub pool: Option<PathBuf>,
    pub sidecar: Option<PathBuf>,
    pub cfg: Config,
}

impl ServeSources {
    pub fn load(&self) -> Result<Suggester> {
        let m = model(&self.model)?;
        let name = self
            .model
            .file_stem()
            .map_or_else(|| "model".to_owned(), |s| s.to_string_lossy().into_owned());
        let mut s = Suggester::new(name, m);
        s.reverse = self.reverse.as_deref().map(model).transpose()?;
        s.predictor = self.predictor.as_deref().map(FramePredictor::load).transpose()?;
        s.lexicons = self.lexicons.as_deref().map(Lexicons::load).transpose()?;
        s.rerank = self.cfg.rerank;
        if let (Some(pool), Some(sc)) = (&self.pool, &self.sidecar) {
            s.frame_sets = pipeline::frame_pool(&s.model, &stories(pool)?, &sidecar(sc)?, self.cfg.rerank.candidate_sets)?;
        }
        Ok(s)
    }
}

fn evaluate(cli: &Cli, ev: &Evaluate) -> Result<()> {
    match ev {
        Evaluate::Control { model: mp, corpus, sidecar: sc, lexicons, clusters, embeddings, limit, every_value, out } => {
            let m = model(mp)?;
            cli.check_kind(&m)?;
            let sc = sc.as_deref().map(sidecar).transpose()?;
            let lex = Lexicons::load(lexicons)?;
            let cm = clusters.as_deref().map(pipeline::load_clusters).transpose()?;
            let emb = embeddings.as_deref().map(EmbeddingTable::load).transpose()?;
            let cluster_eval = match (&cm, &emb) {
                (Some(c), Some(e)) => Some((c, e)),
                (Some(_), None) => bail!("--clusters needs --embeddings"),
                _ => None,
            };
            let cfg = ControlConfig {
                method: cli.decoding(1)?.single(),
                value_limit: *limit,
                plan: every_value.then_some(TargetPlan::EveryValue),
            };
            let table = pipeline::control_table(&m, &stories(corpus)?, sc.as_ref(), &lex, cluster_eval, cfg)?;
            fs::create_dir_all(out)?;
            let stem = m.attribute.kind().to_string();
            let text = table.to_text();
            print!("{text}");
            fs::write(out.join(format!("{stem}.txt")), &text)?;
            write_json(&out.join(format!("{stem}.json")), &table)?;
            if let Some(csv) = table.length_csv() {
                fs::write(out.join(format!("{stem}.csv")), csv)?;
            }
        }
        Evaluate::Oracle { models, corpus, sidecar: sc, out } => {
            let models = models
                .iter()
                .map(|spec| {
                    let (name, path) = named(spec)?;
                    Ok((name, model(&path)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let sc = sc.as_deref().map(sidecar).transpose()?;
            let rows = pipeline::oracle_rows(&models, &stories(corpus)?, sc.as_ref(), &cli.decoding(1)?)?;
            fs::create_dir_all(out)?;
            let text = oracle_table(&rows);
            print!("{text}");
            fs::write(out.join("oracle.txt"), &text)?;
            write_json(&out.join("oracle.json"), &rows)?;
        }
        Evaluate::Sets { generations, corpus, self_bleu, out } => {
            let systems = generations
                .iter()
                .map(|spec| {
                    let (name, path) = named(spec)?;
                    let lists = read_generations(&path).with_context(|| format!("reading {}", path.display()))?;
                    info!("{name}: {} lists from the {} generator", lists.len(), pipeline::generator_label(&lists));
                    Ok((name, lists))
                })
                .collect::<Result<Vec<_>>>()?;
            let rows = pipeline::set_rows(&systems, &stories(corpus)?, (*self_bleu).into())?;
            fs::create_dir_all(out)?;
            let text = set_table(&rows);
            print!("{text}");
            fs::write(out.join("sets.txt"), &text)?;
            write_json(&out.join("sets.json"), &rows)?;
        }
    }
    Ok(())
}
