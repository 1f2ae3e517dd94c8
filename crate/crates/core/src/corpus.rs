//! Corpus domain types and line-delimited corpus ingestion.
//!
//! One JSON document per line:
//!
//! ```text
//! {"doc_id": "d1", "topic_gold": "t1", "tokens": ["A", "storm", "hit"],
//!  "mentions": [{"mention_id": "m1", "kind": "entity", "start": 0, "end": 1,
//!                "gold_cluster": "c1", "entity_type": "OTHER"},
//!               {"mention_id": "m2", "kind": "event", "start": 2, "end": 2,
//!                "args": [{"role": "ARG0", "mention_id": "m1"}]}]}
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::hash::Hash;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MentionKind {
    Entity,
    Event,
}

impl fmt::Display for MentionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MentionKind::Entity => "entity",
            MentionKind::Event => "event",
        })
    }
}

impl std::str::FromStr for MentionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entity" => Ok(MentionKind::Entity),
            "event" => Ok(MentionKind::Event),
            other => Err(Error::Format(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "UPPERCASE")]
pub enum EntityType {
    Person,
    Org,
    Time,
    Loc,
    #[default]
    Other,
}

/// Argument roles. The discriminant is the serialization code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "ARG0")]
    Arg0 = 0,
    #[serde(rename = "ARG1")]
    Arg1 = 1,
    #[serde(rename = "TIME")]
    Time = 2,
    #[serde(rename = "LOC")]
    Loc = 3,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Arg0, Role::Arg1, Role::Time, Role::Loc];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Role> {
        Role::ALL.get(code as usize).copied()
    }

    /// TIME and LOC entities may only fill their matching role, and those
    /// roles only take matching entities.
    pub fn admits(self, ty: EntityType) -> bool {
        (self == Role::Time) == (ty == EntityType::Time) && (self == Role::Loc) == (ty == EntityType::Loc)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Argument {
    pub role: Role,
    pub mention_id: String,
}

/// Inverse of an event argument link, recorded on the entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Participation {
    pub trigger: String,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mention {
    pub mention_id: String,
    pub kind: MentionKind,
    pub start: usize,
    pub end: usize,
    pub gold_cluster: Option<String>,
    pub entity_type: EntityType,
    /// Event arguments, ordered by the textual position of the argument.
    pub args: Vec<Argument>,
    /// Events the entity takes part in, ordered by trigger position.
    pub events_participated: Vec<Participation>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub topic_gold: Option<String>,
    pub tokens: Vec<String>,
    pub mentions: Vec<Mention>,
}

impl Document {
    pub fn mention(&self, id: &str) -> Option<&Mention> {
        self.mentions.iter().find(|m| m.mention_id == id)
    }

    pub fn mentions_of(&self, kind: MentionKind) -> impl Iterator<Item = &Mention> {
        self.mentions.iter().filter(move |m| m.kind == kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub mode: MentionKind,
    pub documents: Vec<Document>,
    /// Argument links removed by the TIME/LOC type constraint.
    pub dropped_arguments: usize,
    doc_index: HashMap<String, usize>,
    mention_index: HashMap<String, (usize, usize)>,
}

impl Corpus {
    /// Validate and index a set of documents.
    pub fn from_documents(mode: MentionKind, documents: Vec<Document>) -> Result<Self> {
        let mut raw = Vec::with_capacity(documents.len());
        for doc in documents {
            raw.push(RawDocument::from(&doc));
        }
        build_corpus(mode, raw.into_iter().enumerate().map(|(i, d)| (i + 1, d)))
    }

    pub fn doc(&self, doc_id: &str) -> Option<&Document> {
        self.doc_index.get(doc_id).map(|&i| &self.documents[i])
    }

    pub fn doc_position(&self, doc_id: &str) -> Option<usize> {
        self.doc_index.get(doc_id).copied()
    }

    pub fn mention(&self, mention_id: &str) -> Option<(&Document, &Mention)> {
        self.mention_index.get(mention_id).map(|&(d, m)| {
            let doc = &self.documents[d];
            (doc, &doc.mentions[m])
        })
    }

    /// Mentions of the corpus mode, in document then textual order.
    pub fn target_mentions(&self) -> impl Iterator<Item = (&Document, &Mention)> {
        let kind = self.mode;
        self.documents
            .iter()
            .flat_map(move |d| d.mentions_of(kind).map(move |m| (d, m)))
    }

    pub fn num_target_mentions(&self) -> usize {
        self.target_mentions().count()
    }

    /// Gold clustering over all mentions of `kind`; every one must carry a gold id.
    pub fn gold_clustering(&self, kind: MentionKind) -> Result<Clustering> {
        let mut pairs = Vec::new();
        for doc in &self.documents {
            for m in doc.mentions_of(kind) {
                let g = m
                    .gold_cluster
                    .as_ref()
                    .ok_or_else(|| Error::MissingGold(m.mention_id.clone()))?;
                pairs.push((m.mention_id.clone(), g.clone()));
            }
        }
        Ok(Clustering::from_labels(pairs))
    }

    /// Gold clustering where mentions without a gold id become singletons.
    pub fn gold_clustering_lenient(&self, kind: MentionKind) -> Clustering {
        let mut pairs = Vec::new();
        for doc in &self.documents {
            for m in doc.mentions_of(kind) {
                let label = match &m.gold_cluster {
                    Some(g) => format!("g:{g}"),
                    None => format!("s:{}", m.mention_id),
                };
                pairs.push((m.mention_id.clone(), label));
            }
        }
        Clustering::from_labels(pairs)
    }

    /// `topic_gold` for every document, if all documents carry one.
    pub fn gold_topics(&self) -> Option<BTreeMap<String, String>> {
        self.documents
            .iter()
            .map(|d| d.topic_gold.clone().map(|t| (d.doc_id.clone(), t)))
            .collect()
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        write_documents(path, &self.documents)
    }
}

pub fn write_documents(path: impl AsRef<Path>, docs: &[Document]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for doc in docs {
        let line = serde_json::to_string(&RawDocument::from(doc))
            .map_err(|e| Error::Format(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Read and validate a corpus file.
pub fn load_corpus(path: impl AsRef<Path>, mode: MentionKind) -> Result<Corpus> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let corpus = parse_corpus(&text, mode)?;
    if corpus.dropped_arguments > 0 {
        log::warn!(
            "{}: dropped {} argument links violating the TIME/LOC type constraint",
            path.display(),
            corpus.dropped_arguments
        );
    }
    Ok(corpus)
}

pub fn parse_corpus(text: &str, mode: MentionKind) -> Result<Corpus> {
    let mut raw = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: RawDocument = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
            line: i + 1,
            reason: e.to_string(),
        })?;
        raw.push((i + 1, doc));
    }
    build_corpus(mode, raw.into_iter())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawDocument {
    doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    topic_gold: Option<String>,
    tokens: Vec<String>,
    #[serde(default)]
    mentions: Vec<RawMention>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawMention {
    mention_id: String,
    kind: MentionKind,
    start: usize,
    end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gold_cluster: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    entity_type: Option<EntityType>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    args: Vec<Argument>,
}

impl From<&Document> for RawDocument {
    fn from(doc: &Document) -> Self {
        RawDocument {
            doc_id: doc.doc_id.clone(),
            topic_gold: doc.topic_gold.clone(),
            tokens: doc.tokens.clone(),
            mentions: doc
                .mentions
                .iter()
                .map(|m| RawMention {
                    mention_id: m.mention_id.clone(),
                    kind: m.kind,
                    start: m.start,
                    end: m.end,
                    gold_cluster: m.gold_cluster.clone(),
                    entity_type: (m.kind == MentionKind::Entity).then_some(m.entity_type),
                    args: m.args.clone(),
                })
                .collect(),
        }
    }
}

fn build_corpus(mode: MentionKind, raw: impl Iterator<Item = (usize, RawDocument)>) -> Result<Corpus> {
    let mut documents = Vec::new();
    let mut doc_index = HashMap::new();
    let mut seen_mentions = HashSet::new();
    let mut dropped = 0usize;

    for (line, rd) in raw {
        if doc_index.contains_key(&rd.doc_id) {
            return Err(Error::DuplicateDocId(rd.doc_id));
        }
        let n_tokens = rd.tokens.len();
        let mut mentions = Vec::with_capacity(rd.mentions.len());
        for rm in rd.mentions {
            if rm.start > rm.end || rm.end >= n_tokens {
                return Err(Error::MalformedRecord {
                    line,
                    reason: format!(
                        "mention {} span ({}, {}) invalid for {} tokens",
                        rm.mention_id, rm.start, rm.end, n_tokens
                    ),
                });
            }
            if !seen_mentions.insert(rm.mention_id.clone()) {
                return Err(Error::DuplicateMentionId(rm.mention_id));
            }
            if rm.kind == MentionKind::Entity && !rm.args.is_empty() {
                return Err(Error::MalformedRecord {
                    line,
                    reason: format!("entity mention {} carries arguments", rm.mention_id),
                });
            }
            mentions.push(Mention {
                mention_id: rm.mention_id,
                kind: rm.kind,
                start: rm.start,
                end: rm.end,
                gold_cluster: rm.gold_cluster,
                entity_type: rm.entity_type.unwrap_or_default(),
                args: rm.args,
                events_participated: Vec::new(),
            });
        }
        mentions.sort_by(|a, b| {
            (a.start, a.end, &a.mention_id).cmp(&(b.start, b.end, &b.mention_id))
        });

        let position: HashMap<String, usize> = mentions
            .iter()
            .enumerate()
            .map(|(i, m)| (m.mention_id.clone(), i))
            .collect();

        // resolve, filter and order event arguments
        let mut participations: Vec<(usize, Participation)> = Vec::new();
        for ev_idx in 0..mentions.len() {
            if mentions[ev_idx].kind != MentionKind::Event {
                continue;
            }
            let args = std::mem::take(&mut mentions[ev_idx].args);
            let mut kept = Vec::with_capacity(args.len());
            for arg in args {
                let target = position
                    .get(&arg.mention_id)
                    .copied()
                    .filter(|&i| mentions[i].kind == MentionKind::Entity)
                    .ok_or_else(|| Error::DanglingArgumentRef {
                        doc: rd.doc_id.clone(),
                        mention: mentions[ev_idx].mention_id.clone(),
                        arg: arg.mention_id.clone(),
                    })?;
                if !arg.role.admits(mentions[target].entity_type) {
                    dropped += 1;
                    continue;
                }
                kept.push((target, arg));
            }
            kept.sort_by_key(|(t, a)| (*t, a.role));
            for (t, a) in &kept {
                participations.push((
                    *t,
                    Participation {
                        trigger: mentions[ev_idx].mention_id.clone(),
                        role: a.role,
                    },
                ));
            }
            mentions[ev_idx].args = kept.into_iter().map(|(_, a)| a).collect();
        }
        // participations were pushed in trigger order, which is textual order
        for (target, p) in participations {
            mentions[target].events_participated.push(p);
        }

        doc_index.insert(rd.doc_id.clone(), documents.len());
        documents.push(Document {
            doc_id: rd.doc_id,
            topic_gold: rd.topic_gold,
            tokens: rd.tokens,
            mentions,
        });
    }

    let mut mention_index = HashMap::new();
    for (d, doc) in documents.iter().enumerate() {
        for (m, mention) in doc.mentions.iter().enumerate() {
            mention_index.insert(mention.mention_id.clone(), (d, m));
        }
    }

    Ok(Corpus {
        mode,
        documents,
        dropped_arguments: dropped,
        doc_index,
        mention_index,
    })
}

/// Total assignment of mention ids to dense cluster ids.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Clustering {
    assignment: BTreeMap<String, usize>,
    num_clusters: usize,
}

impl Clustering {
    /// Relabel arbitrary labels densely, in order of first appearance.
    pub fn from_labels<L: Eq + Hash>(pairs: impl IntoIterator<Item = (String, L)>) -> Self {
        let mut ids: HashMap<L, usize> = HashMap::new();
        let mut assignment = BTreeMap::new();
        for (mention, label) in pairs {
            let next = ids.len();
            let id = *ids.entry(label).or_insert(next);
            assignment.insert(mention, id);
        }
        // a mention listed twice may have orphaned a label
        let mut c = Clustering {
            num_clusters: ids.len(),
            assignment,
        };
        c.compact();
        c
    }

    fn compact(&mut self) {
        let mut remap: BTreeMap<usize, usize> = BTreeMap::new();
        let mut order: Vec<usize> = self.assignment.values().copied().collect();
        order.sort_unstable();
        order.dedup();
        for (new, old) in order.into_iter().enumerate() {
            remap.insert(old, new);
        }
        for v in self.assignment.values_mut() {
            *v = remap[v];
        }
        self.num_clusters = remap.len();
    }

    pub fn get(&self, mention_id: &str) -> Option<usize> {
        self.assignment.get(mention_id).copied()
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.assignment.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn mention_ids(&self) -> impl Iterator<Item = &str> {
        self.assignment.keys().map(String::as_str)
    }

    /// Clusters indexed by cluster id, members sorted.
    pub fn clusters(&self) -> Vec<Vec<String>> {
        let mut out = vec![Vec::new(); self.num_clusters];
        for (m, &c) in &self.assignment {
            out[c].push(m.clone());
        }
        out
    }

    /// Restriction to the given mention ids (relabelled densely).
    pub fn restrict<'a>(&self, keep: impl IntoIterator<Item = &'a str>) -> Clustering {
        let keep: HashSet<&str> = keep.into_iter().collect();
        Clustering::from_labels(
            self.assignment
                .iter()
                .filter(|(m, _)| keep.contains(m.as_str()))
                .map(|(m, &c)| (m.clone(), c)),
        )
    }

    /// Same partition, ignoring cluster labels.
    pub fn same_partition(&self, other: &Clustering) -> bool {
        if self.assignment.len() != other.assignment.len() {
            return false;
        }
        let mut fwd: HashMap<usize, usize> = HashMap::new();
        let mut bwd: HashMap<usize, usize> = HashMap::new();
        for (m, &a) in &self.assignment {
            let Some(&b) = other.assignment.get(m) else {
                return false;
            };
            if *fwd.entry(a).or_insert(b) != b || *bwd.entry(b).or_insert(a) != a {
                return false;
            }
        }
        true
    }
}
