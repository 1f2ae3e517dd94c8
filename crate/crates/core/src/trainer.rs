//! Teacher-forced cross-entropy training with per-document batches, global
//! gradient clipping, Adam, and early stopping on dev CoNLL F1.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Clustering, Corpus, MentionKind};
use crate::embeddings::EmbeddingStore;
use crate::engine::{order_documents, process_document_on, run_corpus, DocOrder, EngineState, PassInputs, RunOptions};
use crate::error::{Error, Result};
use crate::graph::{Eval, Graph, Tape};
use crate::metrics::conll_f1;
use crate::params::{Config, Model, ModelParams};
use crate::scalar::Scalar;
use crate::scorer::Layout;

/// Mean over steps of `-ln p[gold]`; `None` for a document without steps.
pub fn document_loss<T: Scalar>(steps: &[(Vec<T>, usize)]) -> Option<T> {
    if steps.is_empty() {
        return None;
    }
    let total: T = steps.iter().map(|(p, g)| -p[*g].ln()).sum();
    Some(total / T::lit(steps.len() as f64))
}

/// Teacher-forced loss of one document on graph `g`. Earlier clusters are
/// rebuilt from `inputs.history` so the loss depends on the current parameters only.
pub fn document_loss_on<T: Scalar, G: Graph<T>>(
    g: &mut G,
    state: &mut EngineState<T>,
    layout: &Layout,
    doc: &crate::corpus::Document,
    topic: &str,
    inputs: &PassInputs<'_>,
) -> Result<Option<G::V>> {
    let steps = process_document_on(g, state, layout, doc, topic, inputs)?;
    if steps.is_empty() {
        return Ok(None);
    }
    let nlls: Vec<G::V> = steps
        .iter()
        .map(|s| {
            let gold = s.step.gold.expect("teacher-forced steps carry a label");
            g.nll(&s.logits, gold)
        })
        .collect();
    Ok(Some(g.mean(&nlls)))
}

pub struct DocGradient<T> {
    pub loss: T,
    pub grads: ModelParams<T>,
    pub steps: usize,
}

/// Loss and exact gradients of one document; advances `state` past it.
pub fn document_gradients<T: Scalar>(
    model: &Model<T>,
    state: &mut EngineState<T>,
    doc: &crate::corpus::Document,
    topic: &str,
    inputs: &PassInputs<'_>,
) -> Result<Option<DocGradient<T>>> {
    let layout = Layout::of(&model.config);
    let mut tape = Tape::new(&model.params);
    let before = state.num_mentions();
    let Some(loss) = document_loss_on(&mut tape, state, &layout, doc, topic, inputs)? else {
        return Ok(None);
    };
    let value = tape.value(&loss)[0];
    Ok(Some(DocGradient {
        loss: value,
        grads: tape.backward(loss),
        steps: state.num_mentions() - before,
    }))
}

/// Loss of one document by direct evaluation, leaving `state` untouched.
pub fn document_loss_value<T: Scalar>(
    model: &Model<T>,
    state: &EngineState<T>,
    doc: &crate::corpus::Document,
    topic: &str,
    inputs: &PassInputs<'_>,
) -> Result<Option<T>> {
    let layout = Layout::of(&model.config);
    let mut g = Eval::new(&model.params);
    let mut s = state.clone();
    Ok(document_loss_on(&mut g, &mut s, &layout, doc, topic, inputs)?.map(|v| v[0]))
}

fn topic_of<'a>(topics: Option<&'a BTreeMap<String, String>>, doc: &'a crate::corpus::Document) -> Result<&'a str> {
    match topics {
        Some(t) => t.get(&doc.doc_id).map(String::as_str),
        None => doc.topic_gold.as_deref(),
    }
    .ok_or_else(|| Error::MissingTopic(doc.doc_id.clone()))
}

/// Teacher-forced inputs for a whole-corpus objective.
#[derive(Clone, Copy)]
pub struct Objective<'a> {
    pub corpus: &'a Corpus,
    pub embeddings: &'a EmbeddingStore,
    pub gold: &'a Clustering,
    pub entities: Option<&'a Clustering>,
    pub topics: Option<&'a BTreeMap<String, String>>,
}

impl Objective<'_> {
    fn inputs(&self) -> PassInputs<'_> {
        PassInputs {
            embeddings: self.embeddings,
            entities: self.entities,
            gold: Some(self.gold),
            history: Some(self.corpus),
        }
    }

    /// Sum of document losses, by direct evaluation.
    pub fn value<T: Scalar>(&self, model: &Model<T>) -> Result<T> {
        let layout = Layout::of(&model.config);
        let inputs = self.inputs();
        let mut state = EngineState::new(self.corpus.mode, model.config.d_m, true);
        let mut total = T::zero();
        for i in order_documents(self.corpus, DocOrder::ById) {
            let doc = &self.corpus.documents[i];
            let topic = topic_of(self.topics, doc)?;
            let mut g = Eval::new(&model.params);
            if let Some(v) = document_loss_on(&mut g, &mut state, &layout, doc, topic, &inputs)? {
                total += v[0];
            }
        }
        Ok(total)
    }

    /// Sum of document losses and its exact gradient.
    pub fn gradient<T: Scalar>(&self, model: &Model<T>) -> Result<(T, ModelParams<T>)> {
        let inputs = self.inputs();
        let mut state = EngineState::new(self.corpus.mode, model.config.d_m, true);
        let mut total = T::zero();
        let mut grads = model.params.zeros_like();
        for i in order_documents(self.corpus, DocOrder::ById) {
            let doc = &self.corpus.documents[i];
            let topic = topic_of(self.topics, doc)?;
            if let Some(dg) = document_gradients(model, &mut state, doc, topic, &inputs)? {
                total += dg.loss;
                grads.add_assign(&dg.grads);
            }
        }
        Ok((total, grads))
    }
}

/// Per-tensor relative error between analytic and central-difference gradients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradCheck {
    pub tensor: String,
    pub analytic_norm: f64,
    pub numeric_norm: f64,
    pub abs_error: f64,
    pub rel_error: f64,
}

/// Denominator floor of the relative error. Tensors with an identically
/// zero gradient (the output bias, which cancels in the softmax) are then
/// judged on absolute error instead of on finite-difference noise.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Central differences with step `h` on every scalar of every tensor.
/// Relative error is `|a - n| / max(|a| + |n|, GRAD_CHECK_FLOOR)` over the flattened tensor.
pub fn gradient_check(model: &Model<f64>, objective: &Objective<'_>, h: f64) -> Result<Vec<GradCheck>> {
    let (_, analytic) = objective.gradient(model)?;
    let mut probe = model.clone();
    let mut out = Vec::new();
    for (id, tensor) in model.params.iter() {
        let mut numeric = vec![0.0; tensor.data.len()];
        for (i, n) in numeric.iter_mut().enumerate() {
            let orig = tensor.data[i];
            probe.params.get_mut(id).data[i] = orig + h;
            let up = objective.value(&probe)?;
            probe.params.get_mut(id).data[i] = orig - h;
            let down = objective.value(&probe)?;
            probe.params.get_mut(id).data[i] = orig;
            *n = (up - down) / (2.0 * h);
        }
        let a = &analytic.get(id).data;
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = a.iter().zip(&numeric).map(|(x, y)| x - y).collect();
        let (na, nn, nd) = (norm(a), norm(&numeric), norm(&diff));
        out.push(GradCheck {
            tensor: id.name().to_string(),
            analytic_norm: na,
            numeric_norm: nn,
            abs_error: nd,
            rel_error: nd / (na + nn).max(GRAD_CHECK_FLOOR),
        });
    }
    Ok(out)
}

/// Scale to `max_norm` when the global norm exceeds it. Returns the norm before clipping.
pub fn clip_gradients<T: Scalar>(grads: &mut ModelParams<T>, max_norm: T) -> Result<T> {
    for (id, t) in grads.iter() {
        if t.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(id.name().to_string()));
        }
    }
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    Ok(norm)
}

#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub step: u64,
    m: ModelParams<T>,
    v: ModelParams<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &ModelParams<T>, lr: T) -> Self {
        Adam {
            lr,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn update(&mut self, params: &mut ModelParams<T>, grads: &ModelParams<T>) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = T::one() - self.beta1.powi(t);
        let c2 = T::one() - self.beta2.powi(t);
        let (b1, b2) = (self.beta1, self.beta2);
        let one = T::one();
        for (((p, g), m), v) in params
            .tensors_mut()
            .zip(grads.iter().map(|(_, g)| g))
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = b1 * m.data[i] + (one - b1) * gi;
                v.data[i] = b2 * v.data[i] + (one - b2) * gi * gi;
                let mh = m.data[i] / c1;
                let vh = v.data[i] / c2;
                p.data[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

/// Line record of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean document loss; absent for the untrained evaluation (epoch 0).
    pub train_loss: Option<f64>,
    pub dev_conll_f1: f64,
    pub stopped: bool,
}

/// Side inputs of a training run.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrainInputs<'a> {
    /// Topics of the training documents (default: their gold topics).
    pub train_topics: Option<&'a BTreeMap<String, String>>,
    /// Topics of the dev documents (default: their gold topics).
    pub dev_topics: Option<&'a BTreeMap<String, String>>,
    /// Entity clustering of the dev corpus in event mode (default: dev gold entities).
    pub dev_entities: Option<&'a Clustering>,
}

pub struct TrainOutcome<T> {
    /// Parameters with the best dev score (the untrained model included).
    pub best: Model<T>,
    pub best_dev_f1: f64,
    pub best_epoch: usize,
    pub final_model: Model<T>,
    pub log: Vec<EpochLog>,
}

impl<T> TrainOutcome<T> {
    pub fn initial_dev_f1(&self) -> f64 {
        self.log[0].dev_conll_f1
    }
}

fn gold_entities(corpus: &Corpus) -> Result<Option<Clustering>> {
    match corpus.mode {
        MentionKind::Event => Ok(Some(corpus.gold_clustering(MentionKind::Entity)?)),
        MentionKind::Entity => Ok(None),
    }
}

/// Dev CoNLL F1 of `model` in inference mode.
pub fn dev_score<T: Scalar>(
    model: &Model<T>,
    dev: &Corpus,
    dev_emb: &EmbeddingStore,
    topics: Option<&BTreeMap<String, String>>,
    entities: Option<&Clustering>,
) -> Result<f64> {
    let gold = dev.gold_clustering(dev.mode)?;
    let out = run_corpus(
        dev,
        dev_emb,
        model,
        RunOptions {
            topics,
            entities,
            ..Default::default()
        },
    )?;
    conll_f1(&out.clustering, &gold)
}

/// Document order of training epoch `epoch` (1-based).
pub fn epoch_order(config: &Config, epoch: usize) -> DocOrder {
    if config.shuffle_documents {
        DocOrder::Shuffled(config.seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
    } else {
        DocOrder::ById
    }
}

/// One teacher-forced epoch; returns the mean document loss.
pub fn train_epoch<T: Scalar>(
    model: &mut Model<T>,
    epoch: usize,
    adam: &mut Adam<T>,
    train: &Corpus,
    emb: &EmbeddingStore,
    gold: &Clustering,
    entities: Option<&Clustering>,
    topics: Option<&BTreeMap<String, String>>,
) -> Result<Option<f64>> {
    let mut state = EngineState::new(train.mode, model.config.d_m, true);
    let inputs = PassInputs {
        embeddings: emb,
        entities,
        gold: Some(gold),
        history: Some(train),
    };
    let clip = T::lit(model.config.clip_norm);
    let mut total = 0.0;
    let mut docs = 0usize;
    for i in order_documents(train, epoch_order(&model.config, epoch)) {
        let doc = &train.documents[i];
        let topic = match topics {
            Some(t) => t.get(&doc.doc_id).map(String::as_str),
            None => doc.topic_gold.as_deref(),
        }
        .ok_or_else(|| Error::MissingTopic(doc.doc_id.clone()))?;
        if let Some(mut dg) = document_gradients(model, &mut state, doc, topic, &inputs)? {
            clip_gradients(&mut dg.grads, clip)?;
            adam.update(&mut model.params, &dg.grads);
            total += dg.loss.as_f64();
            docs += 1;
        }
    }
    Ok((docs > 0).then(|| total / docs as f64))
}

/// Full training run. `on_epoch` sees every log record as it is produced.
pub fn train<T: Scalar>(
    config: &Config,
    train: &Corpus,
    train_emb: &EmbeddingStore,
    dev: &Corpus,
    dev_emb: &EmbeddingStore,
    side: TrainInputs<'_>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    if train.mode != config.mode || dev.mode != config.mode {
        return Err(Error::InvalidConfig(format!(
            "config mode {} but corpora loaded as {} / {}",
            config.mode, train.mode, dev.mode
        )));
    }
    train_emb.validate_against(train)?;
    dev_emb.validate_against(dev)?;
    if train_emb.dim() != config.d_tok || dev_emb.dim() != config.d_tok {
        return Err(Error::dim(config.d_tok, train_emb.dim(), "embedding dim vs d_tok"));
    }
    let gold = train.gold_clustering(train.mode)?;
    let train_entities = gold_entities(train)?;
    let dev_gold_entities = gold_entities(dev)?;
    let dev_entities = side.dev_entities.or(dev_gold_entities.as_ref());

    let mut model = Model::<T>::init(config.clone())?;
    let mut adam = Adam::new(&model.params, T::lit(config.learning_rate));
    let f0 = dev_score(&model, dev, dev_emb, side.dev_topics, dev_entities)?;
    let mut log = vec![EpochLog {
        epoch: 0,
        train_loss: None,
        dev_conll_f1: f0,
        stopped: false,
    }];
    on_epoch(&log[0]);
    let mut best = model.clone();
    let mut best_f1 = f0;
    let mut best_epoch = 0;
    let mut since = 0usize;

    for epoch in 1..=config.max_epochs {
        let loss = train_epoch(
            &mut model,
            epoch,
            &mut adam,
            train,
            train_emb,
            &gold,
            train_entities.as_ref(),
            side.train_topics,
        )?;
        let f1 = dev_score(&model, dev, dev_emb, side.dev_topics, dev_entities)?;
        let mut stopped = false;
        if f1 > best_f1 {
            best_f1 = f1;
            best = model.clone();
            best_epoch = epoch;
            since = 0;
        } else {
            since += 1;
            // since >= 1 here, so patience 0 stops at the first non-improving epoch
            stopped = since >= config.patience;
        }
        let rec = EpochLog {
            epoch,
            train_loss: loss,
            dev_conll_f1: f1,
            stopped: stopped || epoch == config.max_epochs,
        };
        log::info!("epoch {epoch}: loss {loss:?}, dev conll {f1:.4}");
        on_epoch(&rec);
        log.push(rec);
        if stopped {
            break;
        }
    }
    Ok(TrainOutcome {
        best,
        best_dev_f1: best_f1,
        best_epoch,
        final_model: model,
        log,
    })
}
