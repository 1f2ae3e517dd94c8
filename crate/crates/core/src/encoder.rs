//! Mention representations: span embedding, bidirectional argument encoder
//! with mean pooling, and the affine mention composition.

use crate::corpus::{Document, Mention, MentionKind};
use crate::embeddings::EmbeddingStore;
use crate::error::{Error, Result};
use crate::graph::{Eval, Graph};
use crate::linalg::{cast_vec, check_dim};
use crate::params::{ModelParams, ParamId};
use crate::scalar::Scalar;

/// Raw inputs of one mention, before any parameter is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct MentionInput<T> {
    /// `[start; end]` token vectors.
    pub h_span: Vec<T>,
    /// Span vectors of the linked events (entity) or arguments (event), in textual order.
    pub arg_spans: Vec<Vec<T>>,
}

/// `[start; end]`.
pub fn encode_span<T: Scalar>(start: &[T], end: &[T]) -> Result<Vec<T>> {
    check_dim(start.len(), end.len(), "span end vector")?;
    let mut out = Vec::with_capacity(2 * start.len());
    out.extend_from_slice(start);
    out.extend_from_slice(end);
    Ok(out)
}

fn span_of<T: Scalar>(emb: &EmbeddingStore, doc: &Document, m: &Mention) -> Result<Vec<T>> {
    let s = emb.token(&doc.doc_id, m.start)?;
    let e = emb.token(&doc.doc_id, m.end)?;
    encode_span(&cast_vec::<T>(s), &cast_vec::<T>(e))
}

/// Gather the span vector and the argument-side span vectors of `m`.
///
/// Entities aggregate the trigger spans of the events they take part in;
/// events aggregate the span vectors (not full representations) of their
/// argument entities.
pub fn mention_input<T: Scalar>(emb: &EmbeddingStore, doc: &Document, m: &Mention) -> Result<MentionInput<T>> {
    let h_span = span_of(emb, doc, m)?;
    let linked: Vec<&str> = match m.kind {
        MentionKind::Entity => m.events_participated.iter().map(|p| p.trigger.as_str()).collect(),
        MentionKind::Event => m.args.iter().map(|a| a.mention_id.as_str()).collect(),
    };
    let arg_spans = linked
        .into_iter()
        .map(|id| {
            let other = doc.mention(id).ok_or_else(|| Error::DanglingArgumentRef {
                doc: doc.doc_id.clone(),
                mention: m.mention_id.clone(),
                arg: id.to_string(),
            })?;
            span_of(emb, doc, other)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MentionInput { h_span, arg_spans })
}

fn lstm_pass<T: Scalar, G: Graph<T>>(
    g: &mut G,
    ids: [ParamId; 3],
    inputs: &[G::V],
    hidden: usize,
    reverse: bool,
) -> Vec<G::V> {
    let [ih, hh, b] = ids;
    let mut h = g.input(vec![T::zero(); hidden]);
    let mut c = g.input(vec![T::zero(); hidden]);
    let bias = g.param(b);
    let mut out = vec![None; inputs.len()];
    let order: Vec<usize> = if reverse {
        (0..inputs.len()).rev().collect()
    } else {
        (0..inputs.len()).collect()
    };
    for t in order {
        let xw = g.matvec(ih, &inputs[t]);
        let hw = g.matvec(hh, &h);
        let pre = g.add(&xw, &hw);
        let pre = g.add(&pre, &bias);
        let i_pre = g.slice(&pre, 0, hidden);
        let f_pre = g.slice(&pre, hidden, hidden);
        let c_pre = g.slice(&pre, 2 * hidden, hidden);
        let o_pre = g.slice(&pre, 3 * hidden, hidden);
        let i = g.sigmoid(&i_pre);
        let f = g.sigmoid(&f_pre);
        let cand = g.tanh(&c_pre);
        let o = g.sigmoid(&o_pre);
        let keep = g.mul(&f, &c);
        let write = g.mul(&i, &cand);
        c = g.add(&keep, &write);
        let tc = g.tanh(&c);
        h = g.mul(&o, &tc);
        out[t] = Some(h.clone());
    }
    out.into_iter().map(|v| v.expect("every step visited")).collect()
}

/// Bidirectional gated recurrence over `inputs`, per-step `[fwd; bwd]`
/// outputs mean-pooled. Empty input gives the zero vector.
pub fn bilstm_mean<T: Scalar, G: Graph<T>>(g: &mut G, inputs: &[G::V]) -> G::V {
    let hidden = g.params().get(ParamId::LstmFwdHh).cols;
    if inputs.is_empty() {
        return g.input(vec![T::zero(); 2 * hidden]);
    }
    let fwd = lstm_pass(
        g,
        [ParamId::LstmFwdIh, ParamId::LstmFwdHh, ParamId::LstmFwdB],
        inputs,
        hidden,
        false,
    );
    let bwd = lstm_pass(
        g,
        [ParamId::LstmBwdIh, ParamId::LstmBwdHh, ParamId::LstmBwdB],
        inputs,
        hidden,
        true,
    );
    let f = g.mean(&fwd);
    let b = g.mean(&bwd);
    g.concat(&[f, b])
}

/// `W_a [h_span; h_args] + b_a`.
pub fn compose<T: Scalar, G: Graph<T>>(g: &mut G, h_span: &G::V, h_args: &G::V) -> G::V {
    let x = g.concat(&[h_span.clone(), h_args.clone()]);
    let wx = g.matvec(ParamId::MentionW, &x);
    let b = g.param(ParamId::MentionB);
    g.add(&wx, &b)
}

/// Full mention representation `h_x` from raw inputs.
pub fn encode_mention<T: Scalar, G: Graph<T>>(g: &mut G, input: &MentionInput<T>) -> G::V {
    let span = g.input(input.h_span.clone());
    let args: Vec<G::V> = input.arg_spans.iter().map(|a| g.input(a.clone())).collect();
    let agg = bilstm_mean(g, &args);
    compose(g, &span, &agg)
}

/// Aggregated argument vector of width `2 * d_arg`.
pub fn aggregate_args<T: Scalar>(arg_vecs: &[Vec<T>], params: &ModelParams<T>) -> Result<Vec<T>> {
    let d_m = params.get(ParamId::LstmFwdIh).cols;
    for v in arg_vecs {
        check_dim(d_m, v.len(), "argument vector")?;
    }
    let mut g = Eval::new(params);
    Ok(bilstm_mean(&mut g, arg_vecs))
}

pub fn compose_mention<T: Scalar>(h_span: &[T], h_args: &[T], params: &ModelParams<T>) -> Result<Vec<T>> {
    let w = params.get(ParamId::MentionW);
    check_dim(w.cols, h_span.len() + h_args.len(), "[h_span; h_args]")?;
    let d_arg2 = 2 * params.get(ParamId::LstmFwdHh).cols;
    check_dim(d_arg2, h_args.len(), "h_args")?;
    let mut g = Eval::new(params);
    Ok(compose(&mut g, &h_span.to_vec(), &h_args.to_vec()))
}

pub fn mention_representation<T: Scalar>(input: &MentionInput<T>, params: &ModelParams<T>) -> Result<Vec<T>> {
    let h_args = aggregate_args(&input.arg_spans, params)?;
    compose_mention(&input.h_span, &h_args, params)
}
