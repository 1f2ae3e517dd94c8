//! Candidate cluster representations: contextualized member vectors kept as
//! a running (sum, count) per cluster, plus the singleton candidate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Eval, Graph};
use crate::linalg::check_dim;
use crate::params::{ModelParams, ParamId};
use crate::scalar::Scalar;

/// `[ctx; ctx]`, the document context vector lifted to the mention space.
pub fn lift_context<T: Scalar>(ctx: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(2 * ctx.len());
    out.extend_from_slice(ctx);
    out.extend_from_slice(ctx);
    out
}

/// Representation of the singleton candidate for a query in the document with context `ctx`.
pub fn singleton_candidate<T: Scalar>(ctx: &[T]) -> Vec<T> {
    lift_context(ctx)
}

/// `tanh(W_x h_x + W_cls h_ctx + b_c)` on any graph.
pub fn contextualize_on<T: Scalar, G: Graph<T>>(g: &mut G, h_x: &G::V, h_ctx: &G::V) -> G::V {
    let a = g.matvec(ParamId::ComposeWx, h_x);
    let b = g.matvec(ParamId::ComposeWCls, h_ctx);
    let bias = g.param(ParamId::ComposeB);
    let s = g.add(&a, &b);
    let s = g.add(&s, &bias);
    g.tanh(&s)
}

pub fn contextualize<T: Scalar>(h_x: &[T], h_ctx: &[T], params: &ModelParams<T>) -> Result<Vec<T>> {
    let d_m = params.get(ParamId::ComposeWx).cols;
    check_dim(d_m, h_x.len(), "h_x")?;
    check_dim(d_m, h_ctx.len(), "h_ctx")?;
    let mut g = Eval::new(params);
    Ok(contextualize_on(&mut g, &h_x.to_vec(), &h_ctx.to_vec()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Cluster<T> {
    pub cluster_id: usize,
    pub members: Vec<String>,
    sum: Vec<T>,
}

impl<T: Scalar> Cluster<T> {
    pub fn count(&self) -> usize {
        self.members.len()
    }

    pub fn sum(&self) -> &[T] {
        &self.sum
    }

    /// Mean of the contextualized member vectors.
    pub fn rep(&self) -> Vec<T> {
        let n = T::lit(self.count() as f64);
        self.sum.iter().map(|&v| v / n).collect()
    }
}

/// The partition over processed mentions. Cluster ids are dense and never reused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ClusterState<T> {
    dim: usize,
    clusters: Vec<Cluster<T>>,
    membership: BTreeMap<String, usize>,
}

impl<T: Scalar> ClusterState<T> {
    pub fn new(dim: usize) -> Self {
        ClusterState {
            dim,
            clusters: Vec::new(),
            membership: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn num_mentions(&self) -> usize {
        self.membership.len()
    }

    pub fn clusters(&self) -> &[Cluster<T>] {
        &self.clusters
    }

    pub fn cluster(&self, id: usize) -> Result<&Cluster<T>> {
        self.clusters.get(id).ok_or(Error::UnknownCluster(id))
    }

    pub fn cluster_of(&self, mention_id: &str) -> Option<usize> {
        self.membership.get(mention_id).copied()
    }

    pub fn new_cluster(&mut self, h_c: &[T], mention_id: &str) -> Result<usize> {
        check_dim(self.dim, h_c.len(), "contextualized vector")?;
        if self.membership.contains_key(mention_id) {
            return Err(Error::DuplicateMention(mention_id.to_string()));
        }
        let id = self.clusters.len();
        self.clusters.push(Cluster {
            cluster_id: id,
            members: vec![mention_id.to_string()],
            sum: h_c.to_vec(),
        });
        self.membership.insert(mention_id.to_string(), id);
        Ok(id)
    }

    pub fn add_member(&mut self, cluster_id: usize, h_c: &[T], mention_id: &str) -> Result<()> {
        check_dim(self.dim, h_c.len(), "contextualized vector")?;
        if self.membership.contains_key(mention_id) {
            return Err(Error::DuplicateMention(mention_id.to_string()));
        }
        let c = self
            .clusters
            .get_mut(cluster_id)
            .ok_or(Error::UnknownCluster(cluster_id))?;
        for (s, &v) in c.sum.iter_mut().zip(h_c) {
            *s += v;
        }
        c.members.push(mention_id.to_string());
        self.membership.insert(mention_id.to_string(), cluster_id);
        Ok(())
    }

    /// mention id to cluster id, for every processed mention.
    pub fn assignment(&self) -> &BTreeMap<String, usize> {
        &self.membership
    }
}
