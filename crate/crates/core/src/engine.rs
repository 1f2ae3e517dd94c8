//! The sequential cross-document pass: documents in a fixed order, each
//! mention scored against the same-topic clusters built so far plus the
//! singleton candidate, then attached greedily (or to its gold cluster when
//! teacher forced).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::composer::{contextualize_on, lift_context, ClusterState};
use crate::corpus::{Argument, Clustering, Corpus, Document, MentionKind};
use crate::embeddings::EmbeddingStore;
use crate::encoder::{encode_mention, mention_input};
use crate::error::{Error, Result};
use crate::graph::{Eval, Graph};
use crate::linalg::cast_vec;
use crate::params::Model;
use crate::scalar::Scalar;
use crate::scorer::{arg_coref_gates, arg_feature_on, link_logit, predict_link, prepare_query, softmax, Layout};

/// Scorer instrumentation. One invocation = one candidate scored.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScoreTrace {
    pub scorer_invocations: u64,
    /// Candidate count (S included) at every processed mention.
    pub candidate_counts: Vec<u32>,
    #[serde(skip)]
    pub wall_time_secs: f64,
}

// wall time is informational only
impl PartialEq for ScoreTrace {
    fn eq(&self, other: &Self) -> bool {
        self.scorer_invocations == other.scorer_invocations && self.candidate_counts == other.candidate_counts
    }
}

impl ScoreTrace {
    fn record(&mut self, candidates: usize) {
        self.scorer_invocations += candidates as u64;
        self.candidate_counts.push(candidates as u32);
    }

    /// Invocation count recomputed from the per-step log.
    pub fn recount(&self) -> u64 {
        self.candidate_counts.iter().map(|&c| c as u64).sum()
    }
}

/// One processed mention.
#[derive(Debug, Clone, PartialEq)]
pub struct Step<T> {
    pub mention_id: String,
    /// Candidate cluster ids; `None` is the singleton candidate (always last).
    pub candidates: Vec<Option<usize>>,
    pub probs: Vec<T>,
    pub predicted: usize,
    /// Teacher label, when a gold clustering was supplied.
    pub gold: Option<usize>,
    /// Candidate index whose cluster the mention joined.
    pub followed: usize,
    pub cluster_id: usize,
    /// Members of the joined cluster before linking (0 for the singleton).
    pub chosen_size: usize,
}

/// Line record of a prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub mention_id: String,
    pub cluster_id: usize,
    pub chosen_candidate_size: usize,
    pub probability: f64,
}

impl<T: Scalar> Step<T> {
    pub fn record(&self) -> LinkRecord {
        LinkRecord {
            mention_id: self.mention_id.clone(),
            cluster_id: self.cluster_id,
            chosen_candidate_size: self.chosen_size,
            probability: self.probs[self.followed].as_f64(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DocOrder {
    /// Lexicographic by doc id.
    #[default]
    ById,
    Shuffled(u64),
    /// Corpus file order.
    AsGiven,
}

/// Indices into `corpus.documents` in processing order.
pub fn order_documents(corpus: &Corpus, order: DocOrder) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..corpus.documents.len()).collect();
    match order {
        DocOrder::ById => idx.sort_by(|&a, &b| corpus.documents[a].doc_id.cmp(&corpus.documents[b].doc_id)),
        DocOrder::Shuffled(seed) => {
            idx.sort_by(|&a, &b| corpus.documents[a].doc_id.cmp(&corpus.documents[b].doc_id));
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        }
        DocOrder::AsGiven => {}
    }
    idx
}

/// Everything the pass carries between mentions and documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EngineState<T> {
    pub mode: MentionKind,
    pub teacher_forced: bool,
    pub clusters: ClusterState<T>,
    /// Processed documents in order.
    pub documents: Vec<String>,
    /// doc id to topic id.
    pub topics: BTreeMap<String, String>,
    topic_clusters: BTreeMap<String, BTreeSet<usize>>,
    member_doc: BTreeMap<String, String>,
    /// Arguments of processed event mentions (event mode).
    member_args: BTreeMap<String, Vec<Argument>>,
    /// Gold label to cluster id (teacher forcing only).
    gold_map: BTreeMap<usize, usize>,
    pub trace: ScoreTrace,
}

impl<T: Scalar> EngineState<T> {
    pub fn new(mode: MentionKind, d_m: usize, teacher_forced: bool) -> Self {
        EngineState {
            mode,
            teacher_forced,
            clusters: ClusterState::new(d_m),
            documents: Vec::new(),
            topics: BTreeMap::new(),
            topic_clusters: BTreeMap::new(),
            member_doc: BTreeMap::new(),
            member_args: BTreeMap::new(),
            gold_map: BTreeMap::new(),
            trace: ScoreTrace::default(),
        }
    }

    /// Current partition over processed mentions.
    pub fn clustering(&self) -> Clustering {
        Clustering::from_labels(self.clusters.assignment().iter().map(|(m, &c)| (m.clone(), c)))
    }

    pub fn num_mentions(&self) -> usize {
        self.clusters.num_mentions()
    }

    /// Candidate cluster ids for a mention of a document in `topic`, S excluded.
    pub fn candidate_clusters(&self, topic: &str) -> Vec<usize> {
        self.topic_clusters
            .get(topic)
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default()
    }

    /// Clusters with at least one member in `topic`.
    pub fn clusters_in_topic(&self, topic: &str) -> usize {
        self.topic_clusters.get(topic).map_or(0, BTreeSet::len)
    }

    pub fn doc_of(&self, mention_id: &str) -> Option<&str> {
        self.member_doc.get(mention_id).map(String::as_str)
    }

    fn attach(&mut self, target: Option<usize>, h_c: &[T], mention_id: &str, doc_id: &str, topic: &str) -> Result<usize> {
        let cid = match target {
            Some(c) => {
                self.clusters.add_member(c, h_c, mention_id)?;
                c
            }
            None => self.clusters.new_cluster(h_c, mention_id)?,
        };
        self.topic_clusters.entry(topic.to_string()).or_default().insert(cid);
        self.member_doc.insert(mention_id.to_string(), doc_id.to_string());
        Ok(cid)
    }
}

/// Candidates of the current step, ordered by cluster id, then S.
pub fn candidate_set<T: Scalar>(state: &EngineState<T>, topic: &str) -> Vec<Option<usize>> {
    let mut c: Vec<Option<usize>> = state.candidate_clusters(topic).into_iter().map(Some).collect();
    c.push(None);
    c
}

/// Index of the candidate holding a gold-coreferent antecedent of `mention_id`, else S.
pub fn gold_label<T: Scalar>(
    mention_id: &str,
    candidates: &[Option<usize>],
    state: &EngineState<T>,
    gold: &Clustering,
) -> Result<usize> {
    let label = gold
        .get(mention_id)
        .ok_or_else(|| Error::MissingGold(mention_id.to_string()))?;
    let mut hits = candidates.iter().enumerate().filter_map(|(i, c)| {
        let cid = (*c)?;
        let cl = state.clusters.cluster(cid).ok()?;
        cl.members.iter().any(|m| gold.get(m) == Some(label)).then_some(i)
    });
    let first = hits.next();
    if state.teacher_forced {
        assert!(hits.next().is_none(), "teacher-forced clusters must partition gold");
    }
    Ok(first.unwrap_or(candidates.len() - 1))
}

/// Inputs shared by every document of a pass.
pub struct PassInputs<'a> {
    pub embeddings: &'a EmbeddingStore,
    /// Entity clustering for argument features (event mode).
    pub entities: Option<&'a Clustering>,
    /// Gold clustering; teacher labels are produced when present, and the
    /// state follows it when the state is teacher forced.
    pub gold: Option<&'a Clustering>,
    /// When set, representations of clusters from earlier documents are
    /// rebuilt on the graph from this corpus instead of read from the state.
    pub history: Option<&'a Corpus>,
}

/// Per-step graph output: the candidate logits.
pub struct GraphStep<T, V> {
    pub step: Step<T>,
    pub logits: V,
}

/// Process every target mention of `doc` on graph `g`.
pub fn process_document_on<T: Scalar, G: Graph<T>>(
    g: &mut G,
    state: &mut EngineState<T>,
    layout: &Layout,
    doc: &Document,
    topic: &str,
    inputs: &PassInputs<'_>,
) -> Result<Vec<GraphStep<T, G::V>>> {
    if state.documents.iter().any(|d| d == &doc.doc_id) {
        return Err(Error::DuplicateDocId(doc.doc_id.clone()));
    }
    if state.mode == MentionKind::Event && inputs.entities.is_none() {
        return Err(Error::MissingEntityClusters);
    }
    if state.teacher_forced && inputs.gold.is_none() {
        return Err(Error::MissingGold(format!("teacher-forced pass over {}", doc.doc_id)));
    }
    let emb = inputs.embeddings;
    let ctx: Vec<T> = lift_context(&cast_vec::<T>(emb.context(&doc.doc_id)?));
    state.documents.push(doc.doc_id.clone());
    state.topics.insert(doc.doc_id.clone(), topic.to_string());

    // cluster id -> (sum of contextualized members on the graph, count)
    let mut reps: HashMap<usize, (G::V, usize)> = HashMap::new();
    let mut steps = Vec::new();
    let ctx_v = g.input(ctx.clone());

    for m in doc.mentions_of(state.mode) {
        let input = mention_input::<T>(emb, doc, m)?;
        let h_x = encode_mention(g, &input);
        let h_c = contextualize_on(g, &h_x, &ctx_v);

        let candidates = candidate_set(state, topic);
        let q = prepare_query(g, h_x);
        let mut logits = Vec::with_capacity(candidates.len());
        for cand in &candidates {
            let (h_p, gates) = match cand {
                Some(cid) => {
                    let (sum, n) = cached_sum(g, &mut reps, state, *cid, inputs)?;
                    let rep = g.scale(&sum, T::one() / T::lit(n as f64));
                    let gates = match (state.mode, inputs.entities) {
                        (MentionKind::Event, Some(ents)) => {
                            let members = &state.clusters.cluster(*cid)?.members;
                            arg_coref_gates(
                                &m.args,
                                members
                                    .iter()
                                    .filter_map(|id| state.member_args.get(id).map(Vec::as_slice)),
                                ents,
                            )?
                        }
                        _ => Vec::new(),
                    };
                    (rep, gates)
                }
                None => (g.input(ctx.clone()), Vec::new()),
            };
            let f_r = arg_feature_on(g, layout, &gates);
            logits.push(link_logit(g, layout, &q, &h_p, f_r));
        }
        state.trace.record(candidates.len());
        let logits = g.concat(&logits);
        let probs = softmax(g.value(&logits));
        let predicted = predict_link(&probs);
        let gold = match inputs.gold {
            Some(gc) => Some(gold_label(&m.mention_id, &candidates, state, gc)?),
            None => None,
        };

        let (followed, target) = if state.teacher_forced {
            let label = inputs
                .gold
                .and_then(|gc| gc.get(&m.mention_id))
                .ok_or_else(|| Error::MissingGold(m.mention_id.clone()))?;
            let target = state.gold_map.get(&label).copied();
            // the gold cluster may sit outside the candidate set (another topic)
            let idx = gold.unwrap_or(candidates.len() - 1);
            (idx, target)
        } else {
            (predicted, candidates[predicted])
        };
        let chosen_size = match target {
            Some(cid) => state.clusters.cluster(cid)?.count(),
            None => 0,
        };
        if let Some(cid) = target {
            let (sum, n) = cached_sum(g, &mut reps, state, cid, inputs)?;
            let sum = g.add(&sum, &h_c);
            reps.insert(cid, (sum, n + 1));
        }
        let hc_val = g.value(&h_c).to_vec();
        let cid = state.attach(target, &hc_val, &m.mention_id, &doc.doc_id, topic)?;
        if target.is_none() {
            reps.insert(cid, (h_c.clone(), 1));
        }
        if state.teacher_forced {
            let label = inputs.gold.and_then(|gc| gc.get(&m.mention_id)).expect("checked above");
            state.gold_map.insert(label, cid);
        }
        if state.mode == MentionKind::Event {
            state.member_args.insert(m.mention_id.clone(), m.args.clone());
        }
        steps.push(GraphStep {
            step: Step {
                mention_id: m.mention_id.clone(),
                candidates,
                probs,
                predicted,
                gold,
                followed,
                cluster_id: cid,
                chosen_size,
            },
            logits,
        });
    }
    Ok(steps)
}

fn cached_sum<T: Scalar, G: Graph<T>>(
    g: &mut G,
    reps: &mut HashMap<usize, (G::V, usize)>,
    state: &EngineState<T>,
    cid: usize,
    inputs: &PassInputs<'_>,
) -> Result<(G::V, usize)> {
    if let Some(r) = reps.get(&cid) {
        return Ok(r.clone());
    }
    let cluster = state.clusters.cluster(cid)?;
    let entry = match inputs.history {
        None => (g.input(cluster.sum().to_vec()), cluster.count()),
        Some(corpus) => {
            let mut parts = Vec::with_capacity(cluster.count());
            for id in &cluster.members {
                let (doc, m) = corpus
                    .mention(id)
                    .ok_or_else(|| Error::UnknownEntityMention(id.clone()))?;
                let input = mention_input::<T>(inputs.embeddings, doc, m)?;
                let ctx = g.input(lift_context(&cast_vec::<T>(inputs.embeddings.context(&doc.doc_id)?)));
                let h_x = encode_mention(g, &input);
                parts.push(contextualize_on(g, &h_x, &ctx));
            }
            (g.sum(&parts), cluster.count())
        }
    };
    reps.insert(cid, entry.clone());
    Ok(entry)
}

/// Options for a full pass.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions<'a> {
    /// doc id to topic id; every document must be covered.
    pub topics: Option<&'a BTreeMap<String, String>>,
    pub entities: Option<&'a Clustering>,
    /// Teacher forcing with this gold clustering.
    pub teacher: Option<&'a Clustering>,
    pub order: DocOrder,
}

pub struct RunOutput<T> {
    pub clustering: Clustering,
    pub state: EngineState<T>,
    pub steps: Vec<Step<T>>,
}

impl<T> RunOutput<T> {
    pub fn trace(&self) -> &ScoreTrace {
        &self.state.trace
    }
}

fn topic_of<'t>(topics: Option<&'t BTreeMap<String, String>>, doc: &'t Document) -> Result<&'t str> {
    match topics {
        Some(t) => t
            .get(&doc.doc_id)
            .map(String::as_str)
            .ok_or_else(|| Error::MissingTopic(doc.doc_id.clone())),
        None => doc
            .topic_gold
            .as_deref()
            .ok_or_else(|| Error::MissingTopic(doc.doc_id.clone())),
    }
}

/// Run the pass over the whole corpus with direct evaluation.
pub fn run_corpus<T: Scalar>(
    corpus: &Corpus,
    embeddings: &EmbeddingStore,
    model: &Model<T>,
    opts: RunOptions<'_>,
) -> Result<RunOutput<T>> {
    let started = Instant::now();
    if model.config.mode != corpus.mode {
        return Err(Error::InvalidConfig(format!(
            "model trained for {} mentions, corpus loaded as {}",
            model.config.mode, corpus.mode
        )));
    }
    let layout = Layout::of(&model.config);
    let mut state = EngineState::new(corpus.mode, model.config.d_m, opts.teacher.is_some());
    let inputs = PassInputs {
        embeddings,
        entities: opts.entities,
        gold: opts.teacher,
        history: None,
    };
    let mut steps = Vec::with_capacity(corpus.num_target_mentions());
    for i in order_documents(corpus, opts.order) {
        let doc = &corpus.documents[i];
        let topic = topic_of(opts.topics, doc)?;
        let mut g = Eval::new(&model.params);
        let out = process_document_on(&mut g, &mut state, &layout, doc, topic, &inputs)?;
        steps.extend(out.into_iter().map(|s| s.step));
    }
    state.trace.wall_time_secs = started.elapsed().as_secs_f64();
    Ok(RunOutput {
        clustering: state.clustering(),
        state,
        steps,
    })
}

/// Process one unseen document against an existing state.
pub fn stream_add_document<T: Scalar>(
    state: &mut EngineState<T>,
    doc: &Document,
    topic: &str,
    embeddings: &EmbeddingStore,
    model: &Model<T>,
    entities: Option<&Clustering>,
) -> Result<Vec<Step<T>>> {
    if state.teacher_forced {
        return Err(Error::InvalidConfig("cannot stream into a teacher-forced state".into()));
    }
    let layout = Layout::of(&model.config);
    let inputs = PassInputs {
        embeddings,
        entities,
        gold: None,
        history: None,
    };
    let mut g = Eval::new(&model.params);
    let out = process_document_on(&mut g, state, &layout, doc, topic, &inputs)?;
    Ok(out.into_iter().map(|s| s.step).collect())
}
