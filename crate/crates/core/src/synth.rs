//! Seeded synthetic corpora with known gold clusters and topics.
//!
//! Every gold cluster owns a centroid on a sphere of radius `separation`;
//! mention boundary tokens are centroid plus unit Gaussian noise and
//! document context vectors are a topic centroid plus noise. Words come from
//! topic-specific vocabularies and head words from a small per-topic pool
//! that ignores cluster identity.
//!
//! In event mode, event clusters come in pairs that share a trigger centroid
//! and argument centroids. Their argument entities still belong to distinct
//! gold entity clusters, so only argument coreference tells the pair apart.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{Argument, Clustering, Corpus, Document, EntityType, Mention, MentionKind, Role};
use crate::embeddings::EmbeddingStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_topics: usize,
    pub docs_per_topic: usize,
    pub clusters_per_topic: usize,
    pub mentions_per_doc: usize,
    pub d_tok: usize,
    /// Centroid radius in units of the (unit) noise scale.
    pub separation: f64,
    pub event_mode: bool,
    pub args_per_event: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_topics: 2,
            docs_per_topic: 10,
            clusters_per_topic: 8,
            mentions_per_doc: 6,
            d_tok: 16,
            separation: 8.0,
            event_mode: false,
            args_per_event: 2,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn mode(&self) -> MentionKind {
        if self.event_mode {
            MentionKind::Event
        } else {
            MentionKind::Entity
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_topics", self.n_topics),
            ("docs_per_topic", self.docs_per_topic),
            ("clusters_per_topic", self.clusters_per_topic),
            ("mentions_per_doc", self.mentions_per_doc),
            ("d_tok", self.d_tok),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !self.separation.is_finite() || self.separation < 0.0 {
            return Err(Error::InvalidConfig("separation must be finite and non-negative".into()));
        }
        if self.args_per_event > Role::ALL.len() {
            return Err(Error::InvalidConfig(format!(
                "args_per_event {} exceeds the {} roles",
                self.args_per_event,
                Role::ALL.len()
            )));
        }
        if self.event_mode && self.args_per_event == 0 {
            return Err(Error::InvalidConfig("event mode needs args_per_event >= 1".into()));
        }
        let slots = self.docs_per_topic * self.mentions_per_doc;
        if self.clusters_per_topic > slots {
            return Err(Error::InfeasibleConfig(format!(
                "{} clusters per topic but only {} mentions per topic",
                self.clusters_per_topic, slots
            )));
        }
        Ok(())
    }
}

pub struct SynthData {
    pub corpus: Corpus,
    pub embeddings: EmbeddingStore,
    /// Gold clustering of the target mentions.
    pub gold: Clustering,
    /// Gold entity clustering (every entity mention).
    pub entity_gold: Clustering,
    pub topics: BTreeMap<String, String>,
}

impl SynthData {
    /// `corpus.jsonl`, `embeddings.xemb`, `topics.jsonl`, `entity_clusters.jsonl`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.corpus.write_jsonl(dir.join("corpus.jsonl"))?;
        self.embeddings.write(dir.join("embeddings.xemb"))?;
        crate::formats::write_topics(dir.join("topics.jsonl"), &self.topics)?;
        crate::formats::write_clustering(dir.join("entity_clusters.jsonl"), &self.entity_gold)?;
        Ok(())
    }
}

struct Gen {
    rng: ChaCha8Rng,
    dim: usize,
}

impl Gen {
    fn gauss(&mut self) -> Vec<f32> {
        (0..self.dim).map(|_| self.rng.sample::<f64, _>(StandardNormal) as f32).collect()
    }

    fn on_sphere(&mut self, radius: f64) -> Vec<f32> {
        let v: Vec<f64> = (0..self.dim).map(|_| self.rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        v.iter().map(|x| (x / n * radius) as f32).collect()
    }

    fn around(&mut self, centroid: &[f32], sigma: f32) -> Vec<f32> {
        let noise = self.gauss();
        centroid.iter().zip(noise).map(|(c, e)| c + sigma * e).collect()
    }
}

/// Filler text is cut from a few fixed phrases per topic, so topic n-grams
/// recur across documents.
const PHRASES_PER_TOPIC: usize = 2;
const PHRASE_LEN: usize = 4;
const VOCAB_PER_TOPIC: usize = PHRASES_PER_TOPIC * PHRASE_LEN;
const HEADS_PER_TOPIC: usize = 3;
/// Norm of a topic's context centroid and the noise around it.
const CONTEXT_RADIUS: f64 = 4.0;
const CONTEXT_NOISE: f32 = 0.5;

struct TopicSpec {
    index: usize,
    id: String,
    context: Vec<f32>,
    clusters: Vec<Vec<f32>>,
    // event mode: per event pair, one centroid per role
    args: Vec<Vec<Vec<f32>>>,
}

struct Built {
    doc: Document,
    context: Vec<f32>,
    vectors: Vec<Vec<f32>>,
}

struct Generator<'a> {
    cfg: &'a SynthConfig,
    g: Gen,
    roles: Vec<Role>,
}

impl Generator<'_> {
    fn topic(&mut self, index: usize) -> TopicSpec {
        let cfg = self.cfg;
        let context = self.g.on_sphere(CONTEXT_RADIUS);
        let clusters = if cfg.event_mode {
            // pair (2j, 2j+1) shares one trigger centroid
            let pairs: Vec<Vec<f32>> = (0..cfg.clusters_per_topic.div_ceil(2))
                .map(|_| self.g.on_sphere(cfg.separation))
                .collect();
            (0..cfg.clusters_per_topic).map(|c| pairs[c / 2].clone()).collect()
        } else {
            (0..cfg.clusters_per_topic).map(|_| self.g.on_sphere(cfg.separation)).collect()
        };
        let args = if cfg.event_mode {
            (0..cfg.clusters_per_topic.div_ceil(2))
                .map(|_| self.roles.iter().map(|_| self.g.on_sphere(cfg.separation)).collect())
                .collect()
        } else {
            Vec::new()
        };
        TopicSpec {
            index,
            id: format!("t{index:02}"),
            context,
            clusters,
            args,
        }
    }

    fn word(&mut self, t: &TopicSpec) -> String {
        format!("tok_{}", t.index * VOCAB_PER_TOPIC + self.g.rng.random_range(0..VOCAB_PER_TOPIC))
    }

    fn head(&mut self, t: &TopicSpec) -> String {
        format!("head_{}_{}", t.index, self.g.rng.random_range(0..HEADS_PER_TOPIC))
    }

    fn document(&mut self, t: &TopicSpec, d: usize, labels: &[usize]) -> Built {
        let doc_id = format!("{}_d{d:03}", t.id);
        let mut tokens = Vec::new();
        let mut vectors = Vec::new();
        let mut mentions = Vec::new();
        let mut push = |tokens: &mut Vec<String>, w: String, v: Vec<f32>| {
            tokens.push(w);
            vectors.push(v);
            tokens.len() - 1
        };
        let mut counter = 0;
        let mut next_id = |kind: &str| {
            counter += 1;
            format!("{doc_id}_{kind}{counter}")
        };
        let mut pending: Vec<String> = Vec::new();
        for (i, &c) in labels.iter().enumerate() {
            let phrase = t.index * VOCAB_PER_TOPIC + self.g.rng.random_range(0..PHRASES_PER_TOPIC) * PHRASE_LEN;
            for j in 0..PHRASE_LEN {
                let v = self.g.gauss();
                push(&mut tokens, format!("tok_{}", phrase + j), v);
            }
            if self.cfg.event_mode {
                let trigger = next_id("v");
                let w = self.head(t);
                let v = self.g.around(&t.clusters[c], 1.0);
                let pos = push(&mut tokens, w, v);
                let mut args = Vec::new();
                for (ri, &role) in self.roles.clone().iter().enumerate() {
                    let ent = next_id("e");
                    let w = self.word(t);
                    let v = self.g.around(&t.args[c / 2][ri], 1.0);
                    let ep = push(&mut tokens, w, v);
                    let entity_type = match role {
                        Role::Time => EntityType::Time,
                        Role::Loc => EntityType::Loc,
                        Role::Arg0 => EntityType::Person,
                        Role::Arg1 => EntityType::Org,
                    };
                    mentions.push(Mention {
                        mention_id: ent.clone(),
                        kind: MentionKind::Entity,
                        start: ep,
                        end: ep,
                        gold_cluster: Some(format!("{}_ent{c}_{}", t.id, role.code())),
                        entity_type,
                        args: Vec::new(),
                        events_participated: Vec::new(),
                    });
                    args.push(Argument { role, mention_id: ent });
                }
                mentions.push(Mention {
                    mention_id: trigger,
                    kind: MentionKind::Event,
                    start: pos,
                    end: pos,
                    gold_cluster: Some(format!("{}_ev{c}", t.id)),
                    entity_type: EntityType::Other,
                    args,
                    events_participated: Vec::new(),
                });
            } else {
                let id = next_id("e");
                let start = if self.g.rng.random_bool(0.5) {
                    let w = self.word(t);
                    let v = self.g.around(&t.clusters[c], 1.0);
                    Some(push(&mut tokens, w, v))
                } else {
                    None
                };
                let w = self.head(t);
                let v = self.g.around(&t.clusters[c], 1.0);
                let end = push(&mut tokens, w, v);
                mentions.push(Mention {
                    mention_id: id.clone(),
                    kind: MentionKind::Entity,
                    start: start.unwrap_or(end),
                    end,
                    gold_cluster: Some(format!("{}_ent{c}", t.id)),
                    entity_type: EntityType::Other,
                    args: Vec::new(),
                    events_participated: Vec::new(),
                });
                pending.push(id);
                // a noise trigger after every second entity, taking both as arguments
                let last = i + 1 == labels.len();
                if self.cfg.args_per_event > 0 && (pending.len() == 2 || last) {
                    let w = self.word(t);
                    let v = self.g.gauss();
                    let pos = push(&mut tokens, w, v);
                    let args = pending
                        .drain(..)
                        .zip(&self.roles)
                        .map(|(mention_id, &role)| Argument { role, mention_id })
                        .collect();
                    mentions.push(Mention {
                        mention_id: next_id("v"),
                        kind: MentionKind::Event,
                        start: pos,
                        end: pos,
                        gold_cluster: None,
                        entity_type: EntityType::Other,
                        args,
                        events_participated: Vec::new(),
                    });
                }
            }
        }
        let w = self.word(t);
        let v = self.g.gauss();
        push(&mut tokens, w, v);
        let context = self.g.around(&t.context, CONTEXT_NOISE);
        Built {
            doc: Document {
                doc_id,
                topic_gold: Some(t.id.clone()),
                tokens,
                mentions,
            },
            context,
            vectors,
        }
    }
}

fn assemble(cfg: &SynthConfig, built: Vec<Built>) -> Result<SynthData> {
    let mut embeddings = EmbeddingStore::new(cfg.d_tok);
    let mut topics = BTreeMap::new();
    let mut documents = Vec::with_capacity(built.len());
    for b in built {
        embeddings.insert(b.doc.doc_id.clone(), &b.context, &b.vectors)?;
        topics.insert(b.doc.doc_id.clone(), b.doc.topic_gold.clone().unwrap_or_default());
        documents.push(b.doc);
    }
    let corpus = Corpus::from_documents(cfg.mode(), documents)?;
    debug_assert_eq!(corpus.dropped_arguments, 0);
    let gold = corpus.gold_clustering(cfg.mode())?;
    let entity_gold = corpus.gold_clustering(MentionKind::Entity)?;
    Ok(SynthData {
        corpus,
        embeddings,
        gold,
        entity_gold,
        topics,
    })
}

fn build(cfg: &SynthConfig, dev_docs_per_topic: usize) -> Result<(SynthData, Vec<Built>)> {
    cfg.validate()?;
    let roles = if cfg.event_mode {
        Role::ALL[..cfg.args_per_event].to_vec()
    } else {
        vec![Role::Arg0, Role::Arg1]
    };
    let mut gen = Generator {
        cfg,
        g: Gen {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            dim: cfg.d_tok,
        },
        roles,
    };
    let mut specs = Vec::new();
    let mut built = Vec::new();
    for t in 0..cfg.n_topics {
        let spec = gen.topic(t);
        // every cluster at least once, the rest uniform
        let slots = cfg.docs_per_topic * cfg.mentions_per_doc;
        let mut labels: Vec<usize> = (0..cfg.clusters_per_topic).collect();
        while labels.len() < slots {
            labels.push(gen.g.rng.random_range(0..cfg.clusters_per_topic));
        }
        labels.shuffle(&mut gen.g.rng);
        for (d, chunk) in labels.chunks(cfg.mentions_per_doc).enumerate() {
            built.push(gen.document(&spec, d, chunk));
        }
        specs.push(spec);
    }
    let main = assemble(cfg, built)?;
    let mut dev = Vec::new();
    for spec in &specs {
        for d in 0..dev_docs_per_topic {
            let labels: Vec<usize> = (0..cfg.mentions_per_doc)
                .map(|_| gen.g.rng.random_range(0..cfg.clusters_per_topic))
                .collect();
            dev.push(gen.document(spec, cfg.docs_per_topic + d, &labels));
        }
    }
    Ok((main, dev))
}

/// Generate a corpus, its embeddings and gold annotations.
pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    Ok(build(cfg, 0)?.0)
}

/// The corpus of `generate(cfg)` plus `dev_docs_per_topic` further documents
/// per topic drawn from the same clusters and topic contexts.
pub fn generate_with_dev(cfg: &SynthConfig, dev_docs_per_topic: usize) -> Result<(SynthData, SynthData)> {
    let (main, dev) = build(cfg, dev_docs_per_topic)?;
    let dev = assemble(cfg, dev)?;
    Ok((main, dev))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_is_one_singleton() {
        let cfg = SynthConfig {
            n_topics: 1,
            docs_per_topic: 1,
            clusters_per_topic: 1,
            mentions_per_doc: 1,
            ..Default::default()
        };
        let d = generate(&cfg).unwrap();
        assert_eq!(d.gold.len(), 1);
        assert_eq!(d.gold.num_clusters(), 1);
    }

    #[test]
    fn infeasible_when_clusters_exceed_mentions() {
        let cfg = SynthConfig {
            docs_per_topic: 1,
            mentions_per_doc: 2,
            clusters_per_topic: 3,
            ..Default::default()
        };
        assert!(matches!(generate(&cfg), Err(Error::InfeasibleConfig(_))));
    }

    #[test]
    fn same_seed_same_bytes() {
        for event_mode in [false, true] {
            let cfg = SynthConfig {
                event_mode,
                args_per_event: 3,
                ..Default::default()
            };
            let a = tempfile::tempdir().unwrap();
            let b = tempfile::tempdir().unwrap();
            generate(&cfg).unwrap().write(a.path()).unwrap();
            generate(&cfg).unwrap().write(b.path()).unwrap();
            for f in ["corpus.jsonl", "embeddings.xemb", "topics.jsonl", "entity_clusters.jsonl"] {
                assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
            }
        }
    }

    #[test]
    fn extra_documents_reuse_clusters_and_leave_main_part_unchanged() {
        let cfg = SynthConfig::default();
        let plain = generate(&cfg).unwrap();
        let (main, dev) = generate_with_dev(&cfg, 3).unwrap();
        assert_eq!(main.corpus, plain.corpus);
        assert_eq!(main.embeddings, plain.embeddings);
        assert_eq!(dev.corpus.documents.len(), 6);
        assert!(dev.corpus.documents.iter().all(|d| main.corpus.doc(&d.doc_id).is_none()));
        let labels = |c: &Corpus| -> std::collections::BTreeSet<String> {
            c.target_mentions().filter_map(|(_, m)| m.gold_cluster.clone()).collect()
        };
        assert!(labels(&dev.corpus).is_subset(&labels(&main.corpus)));
    }

    #[test]
    fn shape_and_clean_ingestion() {
        let cfg = SynthConfig {
            event_mode: true,
            args_per_event: 4,
            ..Default::default()
        };
        let d = generate(&cfg).unwrap();
        assert_eq!(d.corpus.dropped_arguments, 0);
        assert_eq!(d.corpus.documents.len(), 20);
        assert_eq!(d.gold.len(), 120);
        assert_eq!(d.gold.num_clusters(), 16);
        assert_eq!(d.entity_gold.len(), 480);
        d.embeddings.validate_against(&d.corpus).unwrap();
        // round trip through the file loader: no warnings
        let dir = tempfile::tempdir().unwrap();
        d.write(dir.path()).unwrap();
        let back = crate::corpus::load_corpus(dir.path().join("corpus.jsonl"), MentionKind::Event).unwrap();
        assert_eq!(back.dropped_arguments, 0);
        assert_eq!(back, d.corpus);
    }
}
