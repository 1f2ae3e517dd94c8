//! `xcoref` command-line interface.
//!
//! Reports go to stdout as JSON. Diagnostics go to stderr, and a failure ends
//! with a one-line JSON error record there. Exit codes: 0 success, 1 invalid
//! input, 2 runtime failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use xcoref::bench::{lemma_baseline, pairwise_count, sequential_bound_check, streaming_cost, BenchReport};
use xcoref::corpus::{parse_corpus, Document};
use xcoref::engine::EngineState;
use xcoref::formats::{
    read_clustering, read_json, read_lemma_table, read_topics, write_json, write_lines, write_predictions,
    write_topics,
};
use xcoref::metrics::MetricOptions;
use xcoref::topics::{clustering_quality, default_stopwords, kmeans, parse_stopwords, tfidf_features};
use xcoref::{
    evaluate, generate_with_dev, load_corpus, load_embeddings, run_corpus, stream_add_document, Clustering, Config,
    Corpus, EmbeddingStore, EpochLog, Error, MentionKind, Model, Result, RunOptions, SynthConfig, TrainInputs,
};

#[derive(Parser)]
#[command(name = "xcoref", version, about = "Streaming cross-document coreference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model with early stopping on dev CoNLL F1.
    Train(TrainArgs),
    /// Cluster the mentions of a corpus with a trained model.
    Infer(InferArgs),
    /// Score a predicted clustering against gold.
    Eval(EvalArgs),
    /// Predict document topics with TF-IDF k-means.
    Topics(TopicsArgs),
    /// Count scorer invocations against the pairwise cost model.
    Bench(BenchArgs),
    /// Generate a synthetic corpus with embeddings and gold annotations.
    Gen(GenArgs),
    /// Add documents to a saved clustering state.
    Stream(StreamArgs),
}

fn parse_mode(s: &str) -> std::result::Result<MentionKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    dev_corpus: PathBuf,
    #[arg(long)]
    dev_embeddings: PathBuf,
    #[arg(long, value_parser = parse_mode, default_value = "entity")]
    mode: MentionKind,
    /// JSON file overriding config defaults; flags override the file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Where to write the best checkpoint.
    #[arg(long)]
    out: PathBuf,
    /// Topics of the training documents (default: their gold topics).
    #[arg(long)]
    topics: Option<PathBuf>,
    /// Topics of the dev documents (default: k-means over the dev corpus).
    #[arg(long)]
    dev_topics: Option<PathBuf>,
    /// Entity clustering of the dev corpus in event mode (default: dev gold).
    #[arg(long)]
    dev_entity_clusters: Option<PathBuf>,
    /// Append one JSON record per epoch to this file.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k_topics: Option<usize>,
    /// Reshuffle training documents every epoch.
    #[arg(long)]
    shuffle_documents: bool,
    /// Hold the argument-coreference feature at zero.
    #[arg(long)]
    no_arg_feature: bool,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Must match the model when given.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<MentionKind>,
    /// Document topics (default: gold topics in the corpus).
    #[arg(long)]
    topics: Option<PathBuf>,
    /// Entity clustering, required in event mode.
    #[arg(long)]
    entity_clusters: Option<PathBuf>,
    /// Prediction records, one per mention.
    #[arg(long)]
    out: PathBuf,
    /// Save the final state for later streaming.
    #[arg(long)]
    state_out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Clustering or prediction file.
    #[arg(long)]
    pred: PathBuf,
    /// Clustering file, or a corpus whose gold labels are used.
    #[arg(long)]
    gold: PathBuf,
    /// Mention kind scored when `--gold` is a corpus.
    #[arg(long, value_parser = parse_mode, default_value = "entity")]
    mode: MentionKind,
    #[arg(long)]
    exclude_singletons: bool,
}

#[derive(Args)]
struct TopicsArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// One stop word per line (default: the bundled English list).
    #[arg(long)]
    stopwords: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    topics: Option<PathBuf>,
    #[arg(long)]
    entity_clusters: Option<PathBuf>,
    /// Follow gold links instead of predictions.
    #[arg(long)]
    teacher_forced: bool,
    /// Lemma table for the head-lemma baseline.
    #[arg(long)]
    lemmas: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 2)]
    n_topics: usize,
    #[arg(long, default_value_t = 10)]
    docs_per_topic: usize,
    #[arg(long, default_value_t = 8)]
    clusters_per_topic: usize,
    #[arg(long, default_value_t = 6)]
    mentions_per_doc: usize,
    #[arg(long, default_value_t = 16)]
    d_tok: usize,
    #[arg(long, default_value_t = 8.0)]
    separation: f64,
    #[arg(long)]
    event_mode: bool,
    #[arg(long, default_value_t = 2)]
    args_per_event: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Extra documents per topic from the same clusters, written to `<out-dir>/dev`.
    #[arg(long, default_value_t = 0)]
    dev_docs: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct StreamArgs {
    /// State saved by `infer --state-out` or an earlier `stream` (default: empty).
    #[arg(long)]
    state: Option<PathBuf>,
    /// Corpus file with the new documents, processed in file order.
    #[arg(long)]
    doc: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Topics of the new documents (default: their gold topics).
    #[arg(long)]
    topics: Option<PathBuf>,
    #[arg(long)]
    entity_clusters: Option<PathBuf>,
    /// Where to write the updated state.
    #[arg(long)]
    out: PathBuf,
    /// Prediction records for the new mentions.
    #[arg(long)]
    predictions: Option<PathBuf>,
}

fn main() -> ExitCode {
    init_logging();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.render().to_string();
            report_error("Usage", message.lines().next().unwrap_or("invalid arguments"));
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Infer(a) => infer(a),
        Command::Eval(a) => eval(a),
        Command::Topics(a) => topics(a),
        Command::Bench(a) => bench(a),
        Command::Gen(a) => gen(a),
        Command::Stream(a) => stream(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(e.kind(), &e.to_string());
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("COREF_LOG", "error"))
        .target(env_logger::Target::Stderr)
        .init();
}

fn report_error(kind: &str, message: &str) {
    eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
}

fn emit<T: Serialize>(report: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(report).map_err(|e| Error::Format(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn optional<T>(path: Option<&PathBuf>, read: impl FnOnce(&Path) -> Result<T>) -> Result<Option<T>> {
    path.map(|p| read(p)).transpose()
}

/// Topic map from a file, or else from the corpus's own gold topics.
fn topics_or_gold(path: Option<&PathBuf>, corpus: &Corpus) -> Result<BTreeMap<String, String>> {
    match path {
        Some(p) => read_topics(p),
        None => corpus
            .gold_topics()
            .ok_or_else(|| Error::InvalidConfig("no --topics given and the corpus has no gold topics".into())),
    }
}

fn predicted_topics(corpus: &Corpus, k: usize, seed: u64) -> Result<BTreeMap<String, String>> {
    let km = kmeans(&tfidf_features(corpus, &default_stopwords()), k, seed)?;
    Ok(km.assignment.into_iter().map(|(d, t)| (d, t.to_string())).collect())
}

// -- train

fn build_config(a: &TrainArgs, d_tok: usize) -> Result<Config> {
    let mut value = serde_json::to_value(Config::new(a.mode, d_tok)).map_err(|e| Error::Format(e.to_string()))?;
    if let Some(path) = &a.config {
        let file: Value = read_json(path)?;
        let Value::Object(overrides) = file else {
            return Err(Error::InvalidConfig(format!("{} is not a JSON object", path.display())));
        };
        let derived_d_m = !overrides.contains_key("d_m");
        let base = value.as_object_mut().expect("config serializes to an object");
        for (k, v) in overrides {
            if !base.contains_key(&k) {
                return Err(Error::InvalidConfig(format!("unknown config key {k:?}")));
            }
            base.insert(k, v);
        }
        if derived_d_m {
            let d = base["d_tok"].as_u64().unwrap_or(d_tok as u64);
            base.insert("d_m".into(), Value::from(2 * d));
        }
    }
    let mut cfg: Config = serde_json::from_value(value).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    if cfg.mode != a.mode {
        return Err(Error::InvalidConfig(format!("config mode {} but --mode {}", cfg.mode, a.mode)));
    }
    if let Some(v) = a.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.max_epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = a.patience {
        cfg.patience = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.k_topics {
        cfg.k_topics = v;
    }
    cfg.shuffle_documents |= a.shuffle_documents;
    if a.no_arg_feature {
        cfg.use_arg_feature = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn embedding_dim(path: &Path) -> Result<usize> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.to_path_buf(), e))?;
    Ok(EmbeddingStore::from_bytes(&bytes)?.dim())
}

#[derive(Serialize)]
struct TrainReport {
    best_epoch: usize,
    best_dev_conll_f1: f64,
    initial_dev_conll_f1: f64,
    epochs_run: usize,
    model: PathBuf,
}

fn train(a: TrainArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus, a.mode)?;
    let dev = load_corpus(&a.dev_corpus, a.mode)?;
    let cfg = build_config(&a, embedding_dim(&a.embeddings)?)?;
    let emb = load_embeddings(&a.embeddings, &corpus, Some(cfg.d_tok))?;
    let dev_emb = load_embeddings(&a.dev_embeddings, &dev, Some(cfg.d_tok))?;
    let train_topics = topics_or_gold(a.topics.as_ref(), &corpus)?;
    let dev_topics = match &a.dev_topics {
        Some(p) => read_topics(p)?,
        None => predicted_topics(&dev, cfg.k_topics, cfg.seed)?,
    };
    let dev_entities = optional(a.dev_entity_clusters.as_ref(), |p| read_clustering(p))?;
    let mut log_lines = Vec::new();
    let out = xcoref::train::<f32>(
        &cfg,
        &corpus,
        &emb,
        &dev,
        &dev_emb,
        TrainInputs {
            train_topics: Some(&train_topics),
            dev_topics: Some(&dev_topics),
            dev_entities: dev_entities.as_ref(),
        },
        |rec: &EpochLog| {
            log::info!("epoch {} dev conll {:.4}", rec.epoch, rec.dev_conll_f1);
            log_lines.push(rec.clone());
        },
    )?;
    if let Some(p) = &a.log {
        write_lines(p, &log_lines)?;
    }
    out.best.save(&a.out)?;
    emit(&TrainReport {
        best_epoch: out.best_epoch,
        best_dev_conll_f1: out.best_dev_f1,
        initial_dev_conll_f1: out.initial_dev_f1(),
        epochs_run: out.log.len() - 1,
        model: a.out,
    })
}

// -- infer

#[derive(Serialize)]
struct InferReport {
    documents: usize,
    mentions: usize,
    clusters: usize,
    scorer_invocations: u64,
    wall_time_secs: f64,
}

/// The entity clustering a model needs, or `MissingEntityClusters`.
fn entity_clusters(mode: MentionKind, path: Option<&PathBuf>) -> Result<Option<Clustering>> {
    match (mode, path) {
        (MentionKind::Event, None) => Err(Error::MissingEntityClusters),
        (MentionKind::Event, Some(p)) => Ok(Some(read_clustering(p)?)),
        (MentionKind::Entity, _) => Ok(None),
    }
}

fn load_model(path: &Path, mode: Option<MentionKind>) -> Result<Model> {
    let model = Model::load(path)?;
    if let Some(m) = mode {
        if m != model.config.mode {
            return Err(Error::InvalidConfig(format!("--mode {m} but the model is a {} model", model.config.mode)));
        }
    }
    Ok(model)
}

fn infer(a: InferArgs) -> Result<()> {
    // fail before loading anything large
    if a.mode == Some(MentionKind::Event) && a.entity_clusters.is_none() {
        return Err(Error::MissingEntityClusters);
    }
    let model = load_model(&a.model, a.mode)?;
    let mode = model.config.mode;
    let entities = entity_clusters(mode, a.entity_clusters.as_ref())?;
    let corpus = load_corpus(&a.corpus, mode)?;
    let emb = load_embeddings(&a.embeddings, &corpus, Some(model.config.d_tok))?;
    let topics = topics_or_gold(a.topics.as_ref(), &corpus)?;
    let out = run_corpus(
        &corpus,
        &emb,
        &model,
        RunOptions {
            topics: Some(&topics),
            entities: entities.as_ref(),
            ..Default::default()
        },
    )?;
    let records: Vec<_> = out.steps.iter().map(|s| s.record()).collect();
    write_predictions(&a.out, &records)?;
    if let Some(p) = &a.state_out {
        write_json(p, &out.state)?;
    }
    emit(&InferReport {
        documents: corpus.documents.len(),
        mentions: out.steps.len(),
        clusters: out.state.clusters.len(),
        scorer_invocations: out.trace().scorer_invocations,
        wall_time_secs: out.trace().wall_time_secs,
    })
}

// -- eval

/// A corpus line carries `doc_id` and `tokens`; anything else is read as a clustering.
fn read_gold(path: &Path, mode: MentionKind) -> Result<Clustering> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.to_path_buf(), e))?;
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("{}");
    let is_corpus = serde_json::from_str::<Value>(first)
        .map(|v| v.get("doc_id").is_some() && v.get("tokens").is_some())
        .unwrap_or(false);
    if is_corpus {
        parse_corpus(&text, mode)?.gold_clustering(mode)
    } else {
        read_clustering(path)
    }
}

fn eval(a: EvalArgs) -> Result<()> {
    let gold = read_gold(&a.gold, a.mode)?;
    let pred = read_clustering(&a.pred)?;
    let report = evaluate(
        &pred,
        &gold,
        MetricOptions {
            exclude_singletons: a.exclude_singletons,
        },
    )?;
    emit(&report)
}

// -- topics

#[derive(Serialize)]
struct TopicsReport {
    k: usize,
    documents: usize,
    iterations: usize,
    objective: f64,
    /// Against the corpus's gold topics, when every document has one.
    #[serde(skip_serializing_if = "Option::is_none")]
    quality: Option<xcoref::topics::ClusterQuality>,
}

fn topics(a: TopicsArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus, MentionKind::Entity)?;
    let stop = match &a.stopwords {
        Some(p) => parse_stopwords(&std::fs::read_to_string(p).map_err(|e| Error::io(p.clone(), e))?),
        None => default_stopwords(),
    };
    let km = kmeans(&tfidf_features(&corpus, &stop), a.k, a.seed)?;
    let assignment: BTreeMap<String, String> = km.assignment.iter().map(|(d, t)| (d.clone(), t.to_string())).collect();
    write_topics(&a.out, &assignment)?;
    let quality = corpus
        .gold_topics()
        .map(|gold| clustering_quality(&km.assignment, &gold))
        .transpose()?;
    emit(&TopicsReport {
        k: a.k,
        documents: corpus.documents.len(),
        iterations: km.iterations,
        objective: km.objective.last().copied().unwrap_or(0.0),
        quality,
    })
}

// -- bench

#[derive(Serialize)]
struct BenchOutput {
    #[serde(flatten)]
    report: BenchReport,
    within_cm: bool,
    lemma_baseline_conll: Option<f64>,
}

fn bench(a: BenchArgs) -> Result<()> {
    let model = load_model(&a.model, None)?;
    let mode = model.config.mode;
    let entities = entity_clusters(mode, a.entity_clusters.as_ref())?;
    let corpus = load_corpus(&a.corpus, mode)?;
    let emb = load_embeddings(&a.embeddings, &corpus, Some(model.config.d_tok))?;
    let topics = topics_or_gold(a.topics.as_ref(), &corpus)?;
    let gold = if a.teacher_forced { Some(corpus.gold_clustering(mode)?) } else { None };
    let opts = RunOptions {
        topics: Some(&topics),
        entities: entities.as_ref(),
        teacher: gold.as_ref(),
        ..Default::default()
    };
    let started = Instant::now();
    let full = run_corpus(&corpus, &emb, &model, opts)?;
    let wall = started.elapsed().as_secs_f64();
    let m = full.steps.len() as u64;
    let c = full.state.clusters.len() as u64;
    let bound = sequential_bound_check(full.trace(), c, m)?;
    let pairwise = pairwise_count(&corpus, Some(&topics))?;

    // stream the last document into a state built from the others
    let streaming = if corpus.documents.len() >= 2 {
        let mut docs: Vec<Document> = corpus.documents.clone();
        docs.sort_by(|x, y| x.doc_id.cmp(&y.doc_id));
        let last = docs.pop().expect("two documents at least");
        let rest = Corpus::from_documents(mode, docs)?;
        let rest_gold = gold.as_ref().map(|g| g.restrict(rest.target_mentions().map(|(_, mm)| mm.mention_id.as_str())));
        let state = run_corpus(
            &rest,
            &emb,
            &model,
            RunOptions {
                teacher: rest_gold.as_ref(),
                ..opts
            },
        )?
        .state;
        let topic = topics
            .get(&last.doc_id)
            .ok_or_else(|| Error::MissingTopic(last.doc_id.clone()))?;
        Some(streaming_cost(&state, &last, topic, &emb, &model, entities.as_ref())?)
    } else {
        None
    };
    let lemmas = optional(a.lemmas.as_ref(), |p| read_lemma_table(p))?;
    let lemma_baseline_conll = match corpus.gold_clustering(mode) {
        Ok(g) => Some(xcoref::conll_f1(&lemma_baseline(&corpus, Some(&topics), lemmas.as_ref())?, &g)?),
        Err(_) => None,
    };
    let out = BenchOutput {
        report: BenchReport::new(&bound, pairwise, wall, streaming),
        within_cm: bound.within_cm,
        lemma_baseline_conll,
    };
    write_json(&a.report, &out)?;
    emit(&out)
}

// -- gen

#[derive(Serialize)]
struct GenReport {
    documents: usize,
    mentions: usize,
    clusters: usize,
    dev_documents: usize,
    out_dir: PathBuf,
}

fn gen(a: GenArgs) -> Result<()> {
    let cfg = SynthConfig {
        n_topics: a.n_topics,
        docs_per_topic: a.docs_per_topic,
        clusters_per_topic: a.clusters_per_topic,
        mentions_per_doc: a.mentions_per_doc,
        d_tok: a.d_tok,
        separation: a.separation,
        event_mode: a.event_mode,
        args_per_event: a.args_per_event,
        seed: a.seed,
    };
    let (main, dev) = generate_with_dev(&cfg, a.dev_docs)?;
    main.write(&a.out_dir)?;
    write_json(a.out_dir.join("synth_config.json"), &cfg)?;
    if a.dev_docs > 0 {
        dev.write(a.out_dir.join("dev"))?;
    }
    emit(&GenReport {
        documents: main.corpus.documents.len(),
        mentions: main.corpus.num_target_mentions(),
        clusters: main.gold.num_clusters(),
        dev_documents: if a.dev_docs > 0 { dev.corpus.documents.len() } else { 0 },
        out_dir: a.out_dir,
    })
}

// -- stream

#[derive(Serialize)]
struct StreamDoc {
    doc_id: String,
    new_mentions: usize,
    comparisons: u64,
    pairwise: u64,
}

#[derive(Serialize)]
struct StreamReport {
    documents: Vec<StreamDoc>,
    mentions: usize,
    clusters: usize,
}

fn stream(a: StreamArgs) -> Result<()> {
    let model = load_model(&a.model, None)?;
    let mode = model.config.mode;
    let entities = entity_clusters(mode, a.entity_clusters.as_ref())?;
    let mut state: EngineState<f32> = match &a.state {
        Some(p) => read_json(p)?,
        None => EngineState::new(mode, model.config.d_m, false),
    };
    if state.mode != mode {
        return Err(Error::InvalidConfig(format!("state holds {} mentions, model is {}", state.mode, mode)));
    }
    let text = std::fs::read_to_string(&a.doc).map_err(|e| Error::io(a.doc.clone(), e))?;
    let new = parse_corpus(&text, mode)?;
    let emb = load_embeddings(&a.embeddings, &new, Some(model.config.d_tok))?;
    let topics = topics_or_gold(a.topics.as_ref(), &new)?;
    let mut docs = Vec::new();
    let mut records = Vec::new();
    for doc in &new.documents {
        let topic = topics
            .get(&doc.doc_id)
            .ok_or_else(|| Error::MissingTopic(doc.doc_id.clone()))?;
        let m = state.num_mentions() as u64;
        let before = state.trace.scorer_invocations;
        let steps = stream_add_document(&mut state, doc, topic, &emb, &model, entities.as_ref())?;
        docs.push(StreamDoc {
            doc_id: doc.doc_id.clone(),
            new_mentions: steps.len(),
            comparisons: state.trace.scorer_invocations - before,
            pairwise: xcoref::bench::streaming_pairwise(m, steps.len() as u64),
        });
        records.extend(steps.iter().map(|s| s.record()));
    }
    write_json(&a.out, &state)?;
    if let Some(p) = &a.predictions {
        write_predictions(p, &records)?;
    }
    emit(&StreamReport {
        documents: docs,
        mentions: state.num_mentions(),
        clusters: state.clusters.len(),
    })
}
