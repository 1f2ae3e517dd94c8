//! Link scoring: similarity features, the argument-coreference feature and
//! the softmax over candidates.
//!
//! Feature layout per candidate:
//! `[h_x * h_P; |h_x - h_P|; cos; mpcos_1..k; f_r (event mode)]`.

use std::collections::BTreeSet;

use crate::corpus::{Argument, Clustering, Role};
use crate::error::{Error, Result};
use crate::graph::{cosine_value, log_softmax, Eval, Graph};
use crate::linalg::{check_dim, Tensor};
use crate::params::{Config, ModelParams, ParamId};
use crate::scalar::Scalar;

/// Shape information the scorer needs beyond the tensors themselves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub d_m: usize,
    pub k: usize,
    pub d_p: usize,
    /// `Some(d_f)` in event mode.
    pub d_f: Option<usize>,
    pub use_arg_feature: bool,
}

impl Layout {
    pub fn of(c: &Config) -> Self {
        Layout {
            d_m: c.d_m,
            k: c.k,
            d_p: c.d_p,
            d_f: c.event_mode().then_some(c.d_f),
            use_arg_feature: c.use_arg_feature,
        }
    }

    pub fn feature_dim(&self) -> usize {
        2 * self.d_m + 1 + self.k + self.d_f.unwrap_or(0)
    }
}

pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    check_dim(a.len(), b.len(), "cosine operand")?;
    Ok(cosine_value(a, b))
}

/// Cosine in each of the `k` projected spaces. `projections` stacks the
/// `k` matrices of shape `d_p x d_m` vertically.
pub fn mp_cosine<T: Scalar>(a: &[T], b: &[T], projections: &Tensor<T>, k: usize) -> Result<Vec<T>> {
    check_dim(a.len(), b.len(), "mp_cosine operand")?;
    if k == 0 || projections.rows % k != 0 {
        return Err(Error::dim(k, projections.rows, "perspective rows not divisible by k"));
    }
    let d_p = projections.rows / k;
    let pa = projections.matvec(a)?;
    let pb = projections.matvec(b)?;
    Ok((0..k)
        .map(|j| cosine_value(&pa[j * d_p..(j + 1) * d_p], &pb[j * d_p..(j + 1) * d_p]))
        .collect())
}

/// Per shared role, whether the query's filler corefers with the filler of
/// the same role in any member event of the candidate. Roles are visited in
/// code order.
pub fn arg_coref_gates<'a>(
    query_args: &[Argument],
    member_args: impl IntoIterator<Item = &'a [Argument]>,
    entities: &Clustering,
) -> Result<Vec<bool>> {
    let cluster = |id: &str| {
        entities
            .get(id)
            .ok_or_else(|| Error::UnknownEntityMention(id.to_string()))
    };
    let mut query: [BTreeSet<usize>; 4] = Default::default();
    for a in query_args {
        query[a.role.code() as usize].insert(cluster(&a.mention_id)?);
    }
    let mut cand: [BTreeSet<usize>; 4] = Default::default();
    for args in member_args {
        for a in args {
            cand[a.role.code() as usize].insert(cluster(&a.mention_id)?);
        }
    }
    Ok(Role::ALL
        .iter()
        .map(|r| r.code() as usize)
        .filter(|&r| !query[r].is_empty() && !cand[r].is_empty())
        .map(|r| !query[r].is_disjoint(&cand[r]))
        .collect())
}

/// Mean of `f_emb[g]` over the gates; zero when no role is shared.
pub fn arg_feature_from_gates<T: Scalar>(gates: &[bool], f_emb: &Tensor<T>) -> Vec<T> {
    let mut out = vec![T::zero(); f_emb.cols];
    if gates.is_empty() {
        return out;
    }
    for &g in gates {
        for (o, &v) in out.iter_mut().zip(f_emb.row(g as usize)) {
            *o += v;
        }
    }
    let n = T::lit(gates.len() as f64);
    out.iter_mut().for_each(|v| *v /= n);
    out
}

pub fn arg_coref_feature<'a, T: Scalar>(
    query_args: &[Argument],
    member_args: impl IntoIterator<Item = &'a [Argument]>,
    entities: &Clustering,
    f_emb: &Tensor<T>,
) -> Result<Vec<T>> {
    let gates = arg_coref_gates(query_args, member_args, entities)?;
    Ok(arg_feature_from_gates(&gates, f_emb))
}

pub fn feature_vector<T: Scalar>(h_x: &[T], h_p: &[T], f_cos: T, f_mp: &[T], f_r: Option<&[T]>) -> Result<Vec<T>> {
    check_dim(h_x.len(), h_p.len(), "candidate representation")?;
    let mut out = Vec::with_capacity(2 * h_x.len() + 1 + f_mp.len() + f_r.map_or(0, <[T]>::len));
    out.extend(h_x.iter().zip(h_p).map(|(&a, &b)| a * b));
    out.extend(h_x.iter().zip(h_p).map(|(&a, &b)| (a - b).abs()));
    out.push(f_cos);
    out.extend_from_slice(f_mp);
    if let Some(f) = f_r {
        out.extend_from_slice(f);
    }
    Ok(out)
}

/// Softmax with max subtraction.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    log_softmax(logits).into_iter().map(T::exp).collect()
}

/// One shared-weight logit per candidate, then a softmax.
pub fn score_candidates<T: Scalar>(features: &[Vec<T>], params: &ModelParams<T>) -> Result<Vec<T>> {
    let w = params.get(ParamId::OutW);
    let b = params.get(ParamId::OutB).data[0];
    let logits = features
        .iter()
        .map(|f| Ok(w.matvec(f)?[0] + b))
        .collect::<Result<Vec<T>>>()?;
    Ok(softmax(&logits))
}

/// Argmax, ties to the lowest index.
pub fn predict_link<T: Scalar>(dist: &[T]) -> usize {
    let mut best = 0;
    for (i, &p) in dist.iter().enumerate().skip(1) {
        if p > dist[best] {
            best = i;
        }
    }
    best
}

/// Query-side quantities shared by every candidate of one step.
pub struct Query<V> {
    pub h_x: V,
    /// Perspective projection of `h_x`.
    pub proj: V,
}

pub fn prepare_query<T: Scalar, G: Graph<T>>(g: &mut G, h_x: G::V) -> Query<G::V> {
    let proj = g.matvec(ParamId::Perspective, &h_x);
    Query { h_x, proj }
}

/// `f_r` on the graph: mean of embedding rows, or a zero constant.
pub fn arg_feature_on<T: Scalar, G: Graph<T>>(g: &mut G, layout: &Layout, gates: &[bool]) -> Option<G::V> {
    let d_f = layout.d_f?;
    if gates.is_empty() || !layout.use_arg_feature {
        return Some(g.input(vec![T::zero(); d_f]));
    }
    let rows: Vec<G::V> = gates.iter().map(|&b| g.param_row(ParamId::ArgFeatEmb, b as usize)).collect();
    Some(g.mean(&rows))
}

/// Length-1 logit of one candidate.
pub fn link_logit<T: Scalar, G: Graph<T>>(
    g: &mut G,
    layout: &Layout,
    q: &Query<G::V>,
    h_p: &G::V,
    f_r: Option<G::V>,
) -> G::V {
    let prod = g.mul(&q.h_x, h_p);
    let diff = g.sub(&q.h_x, h_p);
    let adiff = g.abs(&diff);
    let cos = g.cosine(&q.h_x, h_p);
    let proj = g.matvec(ParamId::Perspective, h_p);
    let mut parts = vec![prod, adiff, cos];
    for j in 0..layout.k {
        let a = g.slice(&q.proj, j * layout.d_p, layout.d_p);
        let b = g.slice(&proj, j * layout.d_p, layout.d_p);
        parts.push(g.cosine(&a, &b));
    }
    parts.extend(f_r);
    let feat = g.concat(&parts);
    let z = g.matvec(ParamId::OutW, &feat);
    let b = g.param(ParamId::OutB);
    g.add(&z, &b)
}

/// Plain feature vector of one candidate, in the documented layout.
pub fn candidate_features<T: Scalar>(
    params: &ModelParams<T>,
    layout: &Layout,
    h_x: &[T],
    h_p: &[T],
    gates: &[bool],
) -> Result<Vec<T>> {
    check_dim(layout.d_m, h_x.len(), "h_x")?;
    check_dim(layout.d_m, h_p.len(), "h_P")?;
    let proj = params.get(ParamId::Perspective);
    let f_mp = mp_cosine(h_x, h_p, proj, layout.k)?;
    let f_r = layout.d_f.map(|d_f| {
        if layout.use_arg_feature {
            arg_feature_from_gates(gates, params.get(ParamId::ArgFeatEmb))
        } else {
            vec![T::zero(); d_f]
        }
    });
    feature_vector(h_x, h_p, cosine_value(h_x, h_p), &f_mp, f_r.as_deref())
}

/// Graph-evaluated logits for a set of candidates (values only).
pub fn eval_logits<T: Scalar>(
    params: &ModelParams<T>,
    layout: &Layout,
    h_x: &[T],
    candidates: &[(Vec<T>, Vec<bool>)],
) -> Vec<T> {
    let mut g = Eval::new(params);
    let q = prepare_query(&mut g, h_x.to_vec());
    candidates
        .iter()
        .map(|(h_p, gates)| {
            let f_r = arg_feature_on(&mut g, layout, gates);
            link_logit(&mut g, layout, &q, h_p, f_r)[0]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::MentionKind;

    fn arg(role: Role, id: &str) -> Argument {
        Argument {
            role,
            mention_id: id.into(),
        }
    }

    #[test]
    fn cosine_cases() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[2.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert!((cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert!(cosine(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn mp_cosine_identity_and_zero() {
        let a = [0.3, -1.0, 2.0];
        let b = [1.0, 0.5, -0.2];
        let mut id = Tensor::zeros(3, 3);
        for i in 0..3 {
            *id.at_mut(i, i) = 1.0;
        }
        assert_eq!(mp_cosine(&a, &b, &id, 1).unwrap(), vec![cosine(&a, &b).unwrap()]);
        assert_eq!(mp_cosine(&a, &b, &Tensor::zeros(6, 3), 3).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn mp_cosine_three_spaces_match_separate_projections() {
        let c = Config {
            d_p: 2,
            ..Config::new(MentionKind::Event, 2)
        };
        let p = ModelParams::<f64>::init(&c, 4);
        let w = p.get(ParamId::Perspective);
        let a = [0.1, 0.2, -0.3, 0.9];
        let b = [-0.4, 1.0, 0.0, 0.6];
        let got = mp_cosine(&a, &b, w, 3).unwrap();
        for j in 0..3 {
            let proj = |x: &[f64]| -> Vec<f64> {
                (0..2)
                    .map(|r| (0..4).map(|i| w.data[(j * 2 + r) * 4 + i] * x[i]).sum())
                    .collect()
            };
            let (pa, pb) = (proj(&a), proj(&b));
            let dot: f64 = pa.iter().zip(&pb).map(|(x, y)| x * y).sum();
            let na = pa.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = pb.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((got[j] - dot / (na * nb)).abs() < 1e-12);
        }
    }

    #[test]
    fn feature_vector_layout() {
        let f = feature_vector(&[1.0, 2.0], &[3.0, 4.0], 0.98387, &[0.98387], None).unwrap();
        assert_eq!(f, vec![3.0, 8.0, 2.0, 2.0, 0.98387, 0.98387]);
        let h = [0.5f64, -0.25];
        let same = feature_vector(&h, &h, cosine(&h, &h).unwrap(), &[], None).unwrap();
        assert_eq!(&same[2..4], &[0.0, 0.0]);
        assert!((same[4] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn graph_features_match_reference_layout() {
        let c = Config {
            d_p: 2,
            ..Config::new(MentionKind::Entity, 1)
        };
        let mut p = ModelParams::<f64>::zeros(&c);
        *p.get_mut(ParamId::Perspective) = Tensor::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let layout = Layout::of(&c);
        let f = candidate_features(&p, &layout, &[1.0, 2.0], &[3.0, 4.0], &[]).unwrap();
        let cos = 11.0 / (5f64.sqrt() * 5.0);
        assert_eq!(f.len(), layout.feature_dim());
        for (a, b) in f.iter().zip([3.0, 8.0, 2.0, 2.0, cos, cos]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((cos - 0.98387).abs() < 1e-5);
        // eval_logits agrees with score over the reference features
        let mut q = ModelParams::<f64>::init(&c, 3);
        *q.get_mut(ParamId::Perspective) = p.get(ParamId::Perspective).clone();
        let feats = vec![
            candidate_features(&q, &layout, &[1.0, 2.0], &[3.0, 4.0], &[]).unwrap(),
            candidate_features(&q, &layout, &[1.0, 2.0], &[0.0, -1.0], &[]).unwrap(),
        ];
        let probs = score_candidates(&feats, &q).unwrap();
        let logits = eval_logits(&q, &layout, &[1.0, 2.0], &[(vec![3.0, 4.0], vec![]), (vec![0.0, -1.0], vec![])]);
        let again = softmax(&logits);
        for (a, b) in probs.iter().zip(&again) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_cases() {
        let c = Config::new(MentionKind::Entity, 1);
        let p = ModelParams::<f64>::init(&c, 0);
        let f = vec![0.3; c.feature_dim()];
        let d = score_candidates(&[f.clone(), f.clone(), f], &p).unwrap();
        for v in &d {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
        let s = softmax(&[0.0, 2f64.ln()]);
        assert!((s[0] - 1.0 / 3.0).abs() < 1e-12 && (s[1] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(softmax(&[5.0f32]), vec![1.0]);
        let shifted = softmax(&[1000.0, 1000.0 + 2f64.ln()]);
        assert!((shifted[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn argmax_ties_to_lowest() {
        assert_eq!(predict_link(&[0.2, 0.7, 0.1]), 1);
        assert_eq!(predict_link(&[0.5, 0.5]), 0);
        assert_eq!(predict_link(&[0.25; 4]), 0);
    }

    #[test]
    fn argument_feature_cases() {
        let emb = Tensor::from_vec(2, 2, vec![0.0, 1.0, 10.0, 20.0]).unwrap();
        let ents = Clustering::from_labels([("e1", 0), ("e2", 0), ("e3", 1), ("e4", 2)].map(|(m, c)| (m.to_string(), c)));
        // no shared role
        let f = arg_coref_feature(&[arg(Role::Arg0, "e1")], [&[arg(Role::Arg1, "e2")][..]], &ents, &emb).unwrap();
        assert_eq!(f, vec![0.0, 0.0]);
        // one shared, coreferent
        let f = arg_coref_feature(&[arg(Role::Arg0, "e1")], [&[arg(Role::Arg0, "e2")][..]], &ents, &emb).unwrap();
        assert_eq!(f, vec![10.0, 20.0]);
        // two shared, one agrees
        let q = [arg(Role::Arg0, "e1"), arg(Role::Loc, "e3")];
        let m = [arg(Role::Arg0, "e2"), arg(Role::Loc, "e4")];
        let f = arg_coref_feature(&q, [&m[..]], &ents, &emb).unwrap();
        assert_eq!(f, vec![5.0, 10.5]);
        // any member suffices
        let m2 = [arg(Role::Loc, "e3")];
        let gates = arg_coref_gates(&q, [&m[..], &m2[..]], &ents).unwrap();
        assert_eq!(gates, vec![true, true]);
        assert!(matches!(
            arg_coref_gates(&[arg(Role::Arg0, "zz")], [&m[..]], &ents),
            Err(Error::UnknownEntityMention(_))
        ));
    }

    #[test]
    fn argument_feature_ignores_cluster_labels() {
        let a = Clustering::from_labels([("e1", 5), ("e2", 5), ("e3", 9)].map(|(m, c)| (m.to_string(), c)));
        let b = Clustering::from_labels([("e3", 0), ("e1", 1), ("e2", 1)].map(|(m, c)| (m.to_string(), c)));
        let q = [arg(Role::Arg0, "e1"), arg(Role::Arg1, "e3")];
        let m = [arg(Role::Arg0, "e2"), arg(Role::Arg1, "e1")];
        assert_eq!(
            arg_coref_gates(&q, [&m[..]], &a).unwrap(),
            arg_coref_gates(&q, [&m[..]], &b).unwrap()
        );
    }
}
