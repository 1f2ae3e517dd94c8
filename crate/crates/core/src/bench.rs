//! Score-count instrumentation, the pairwise cost model, streaming cost and
//! the head-lemma baseline.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Clustering, Corpus, Document};
use crate::embeddings::EmbeddingStore;
use crate::engine::{stream_add_document, EngineState, ScoreTrace};
use crate::error::{Error, Result};
use crate::params::Model;
use crate::scalar::Scalar;

fn topic_for<'a>(topics: Option<&'a BTreeMap<String, String>>, doc: &'a Document) -> Result<&'a str> {
    match topics {
        Some(t) => t.get(&doc.doc_id).map(String::as_str),
        None => doc.topic_gold.as_deref(),
    }
    .ok_or_else(|| Error::MissingTopic(doc.doc_id.clone()))
}

/// Target mentions per topic.
pub fn topic_sizes(corpus: &Corpus, topics: Option<&BTreeMap<String, String>>) -> Result<BTreeMap<String, u64>> {
    let mut sizes = BTreeMap::new();
    for doc in &corpus.documents {
        let t = topic_for(topics, doc)?;
        let n = doc.mentions_of(corpus.mode).count() as u64;
        *sizes.entry(t.to_string()).or_insert(0) += n;
    }
    Ok(sizes)
}

/// Mention pairs scored by an all-pairs model restricted to topics.
pub fn pairwise_count(corpus: &Corpus, topics: Option<&BTreeMap<String, String>>) -> Result<u64> {
    Ok(topic_sizes(corpus, topics)?.values().map(|&m| m * m.saturating_sub(1) / 2).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub m: u64,
    pub c: u64,
    pub sequential_invocations: u64,
    /// c·m, the bound without the singleton candidate.
    pub bound_cm: u64,
    /// (c+1)·m, the bound that counts S at every step.
    pub bound_c1m: u64,
    pub within_cm: bool,
}

/// Check a finished trace against `(c+1)·m`. Fails with `BoundViolation` when
/// exceeded or when the per-step log disagrees with the live counter.
pub fn sequential_bound_check(trace: &ScoreTrace, c: u64, m: u64) -> Result<BoundReport> {
    let recount = trace.recount();
    if recount != trace.scorer_invocations {
        return Err(Error::BoundViolation {
            invocations: trace.scorer_invocations,
            bound: recount,
        });
    }
    let bound_c1m = (c + 1) * m;
    if trace.scorer_invocations > bound_c1m {
        return Err(Error::BoundViolation {
            invocations: trace.scorer_invocations,
            bound: bound_c1m,
        });
    }
    Ok(BoundReport {
        m,
        c,
        sequential_invocations: trace.scorer_invocations,
        bound_cm: c * m,
        bound_c1m,
        within_cm: trace.scorer_invocations <= c * m,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamingCost {
    /// Mentions and clusters in the state before the new document.
    pub m: u64,
    pub c: u64,
    pub new_mentions: u64,
    pub ours: u64,
    pub pairwise: u64,
    /// (c + m')·m' + m'.
    pub bound: u64,
}

/// Pairwise comparisons for `new` mentions against `existing` ones.
pub fn streaming_pairwise(existing: u64, new: u64) -> u64 {
    existing * new + new * new.saturating_sub(1) / 2
}

/// Cost of streaming `doc` into a copy of `state`. Comparisons are measured
/// by running the engine; `state` itself is left unchanged. A teacher-forced
/// state is treated as a finished clustering.
pub fn streaming_cost<T: Scalar>(
    state: &EngineState<T>,
    doc: &Document,
    topic: &str,
    embeddings: &EmbeddingStore,
    model: &Model<T>,
    entities: Option<&Clustering>,
) -> Result<StreamingCost> {
    let mut s = state.clone();
    s.teacher_forced = false;
    let m = s.num_mentions() as u64;
    let c = s.clusters.len() as u64;
    let before = s.trace.scorer_invocations;
    let steps = stream_add_document(&mut s, doc, topic, embeddings, model, entities)?;
    let new = steps.len() as u64;
    Ok(StreamingCost {
        m,
        c,
        new_mentions: new,
        ours: s.trace.scorer_invocations - before,
        pairwise: streaming_pairwise(m, new),
        bound: (c + new) * new + new,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub m: u64,
    pub c: u64,
    pub sequential_invocations: u64,
    pub pairwise_count: u64,
    pub ratio: f64,
    pub bound_cm: u64,
    pub bound_c1m: u64,
    pub wall_time_secs: f64,
    pub streaming: Option<StreamingCost>,
}

impl BenchReport {
    pub fn new(bound: &BoundReport, pairwise: u64, wall_time_secs: f64, streaming: Option<StreamingCost>) -> Self {
        BenchReport {
            m: bound.m,
            c: bound.c,
            sequential_invocations: bound.sequential_invocations,
            pairwise_count: pairwise,
            ratio: if pairwise == 0 {
                0.0
            } else {
                bound.sequential_invocations as f64 / pairwise as f64
            },
            bound_cm: bound.bound_cm,
            bound_c1m: bound.bound_c1m,
            wall_time_secs,
            streaming,
        }
    }
}

/// Lowercased last token of the span, mapped through `lemmas` when present.
pub fn head_lemma(doc: &Document, end: usize, lemmas: Option<&BTreeMap<String, String>>) -> String {
    let head = doc.tokens[end].to_lowercase();
    match lemmas.and_then(|l| l.get(&head)) {
        Some(l) => l.clone(),
        None => head,
    }
}

/// Group target mentions by (topic, head lemma).
pub fn lemma_baseline(
    corpus: &Corpus,
    topics: Option<&BTreeMap<String, String>>,
    lemmas: Option<&BTreeMap<String, String>>,
) -> Result<Clustering> {
    let mut labels = Vec::new();
    for doc in &corpus.documents {
        let t = topic_for(topics, doc)?;
        for m in doc.mentions_of(corpus.mode) {
            labels.push((m.mention_id.clone(), (t.to_string(), head_lemma(doc, m.end, lemmas))));
        }
    }
    Ok(Clustering::from_labels(labels))
}
