//! MUC, B-cubed, entity-level CEAF and their CoNLL average.
//!
//! Scores are computed over cluster lists so that key and response may
//! cover different mentions once singletons are excluded.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::Clustering;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreTriple {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ScoreTriple {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ScoreTriple { precision, recall, f1 }
    }

    fn perfect() -> Self {
        ScoreTriple::new(1.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricOptions {
    /// Drop singleton clusters from both sides before scoring.
    pub exclude_singletons: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorefReport {
    pub muc: ScoreTriple,
    /// Set when the key has no coreference links, leaving MUC undefined.
    pub muc_undefined: bool,
    pub b3: ScoreTriple,
    pub ceaf_e: ScoreTriple,
    pub conll: f64,
    pub mentions: usize,
}

type Clusters = Vec<Vec<String>>;

fn check_universe(pred: &Clustering, gold: &Clustering) -> Result<()> {
    let p: BTreeSet<&str> = pred.mention_ids().collect();
    let g: BTreeSet<&str> = gold.mention_ids().collect();
    if p != g {
        let only_p = p.difference(&g).next();
        let only_g = g.difference(&p).next();
        return Err(Error::UniverseMismatch(format!(
            "{} predicted vs {} gold mentions (first predicted-only: {:?}, first gold-only: {:?})",
            p.len(),
            g.len(),
            only_p,
            only_g
        )));
    }
    Ok(())
}

fn prepare(pred: &Clustering, gold: &Clustering, opts: MetricOptions) -> Result<(Clusters, Clusters)> {
    check_universe(pred, gold)?;
    let mut key = gold.clusters();
    let mut resp = pred.clusters();
    if opts.exclude_singletons {
        key.retain(|c| c.len() > 1);
        resp.retain(|c| c.len() > 1);
    }
    Ok((key, resp))
}

fn index(clusters: &Clusters) -> HashMap<&str, usize> {
    clusters
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.iter().map(move |m| (m.as_str(), i)))
        .collect()
}

/// (numerator, denominator) of MUC recall of `key` against `resp`.
fn muc_side(key: &Clusters, resp: &Clusters) -> (f64, f64) {
    let idx = index(resp);
    let mut num = 0usize;
    let mut den = 0usize;
    for k in key {
        let mut parts = BTreeSet::new();
        let mut unaligned = 0;
        for m in k {
            match idx.get(m.as_str()) {
                Some(&r) => {
                    parts.insert(r);
                }
                None => unaligned += 1,
            }
        }
        num += k.len() - (parts.len() + unaligned);
        den += k.len() - 1;
    }
    (num as f64, den as f64)
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn muc_clusters(key: &Clusters, resp: &Clusters) -> (ScoreTriple, bool) {
    let (rn, rd) = muc_side(key, resp);
    let (pn, pd) = muc_side(resp, key);
    (ScoreTriple::new(ratio(pn, pd), ratio(rn, rd)), rd == 0.0)
}

fn b3_side(key: &Clusters, resp: &Clusters) -> f64 {
    let idx = index(resp);
    let mut num = 0.0;
    let mut den = 0usize;
    for k in key {
        let mut overlap: HashMap<usize, usize> = HashMap::new();
        for m in k {
            if let Some(&r) = idx.get(m.as_str()) {
                *overlap.entry(r).or_default() += 1;
            }
        }
        num += overlap.values().map(|&c| (c * c) as f64).sum::<f64>() / k.len() as f64;
        den += k.len();
    }
    ratio(num, den as f64)
}

fn b3_clusters(key: &Clusters, resp: &Clusters) -> ScoreTriple {
    ScoreTriple::new(b3_side(resp, key), b3_side(key, resp))
}

fn phi4(a: &[String], b: &[String]) -> f64 {
    let sa: BTreeSet<&str> = a.iter().map(String::as_str).collect();
    let common = b.iter().filter(|m| sa.contains(m.as_str())).count();
    2.0 * common as f64 / (a.len() + b.len()) as f64
}

fn ceaf_clusters(key: &Clusters, resp: &Clusters) -> ScoreTriple {
    if key.is_empty() || resp.is_empty() {
        return ScoreTriple::new(0.0, 0.0);
    }
    let w: Vec<Vec<f64>> = key.iter().map(|k| resp.iter().map(|r| phi4(k, r)).collect()).collect();
    let assign = max_weight_matching(&w);
    let total: f64 = assign
        .iter()
        .enumerate()
        .filter_map(|(i, a)| a.map(|j| w[i][j]))
        .sum();
    ScoreTriple::new(total / resp.len() as f64, total / key.len() as f64)
}

pub fn muc(pred: &Clustering, gold: &Clustering) -> Result<ScoreTriple> {
    let (k, r) = prepare(pred, gold, MetricOptions::default())?;
    Ok(muc_clusters(&k, &r).0)
}

/// MUC is undefined when the gold clustering has no links.
pub fn muc_defined(gold: &Clustering) -> bool {
    gold.clusters().iter().any(|c| c.len() > 1)
}

pub fn b_cubed(pred: &Clustering, gold: &Clustering) -> Result<ScoreTriple> {
    let (k, r) = prepare(pred, gold, MetricOptions::default())?;
    Ok(b3_clusters(&k, &r))
}

pub fn ceaf_e(pred: &Clustering, gold: &Clustering) -> Result<ScoreTriple> {
    let (k, r) = prepare(pred, gold, MetricOptions::default())?;
    Ok(ceaf_clusters(&k, &r))
}

/// Mean of the defined F1 scores (MUC drops out when the gold has no links).
pub fn conll_f1(pred: &Clustering, gold: &Clustering) -> Result<f64> {
    Ok(evaluate(pred, gold, MetricOptions::default())?.conll)
}

pub fn evaluate(pred: &Clustering, gold: &Clustering, opts: MetricOptions) -> Result<CorefReport> {
    let (key, resp) = prepare(pred, gold, opts)?;
    let mentions = gold.len();
    if key.is_empty() && resp.is_empty() {
        // nothing left to score: only possible with singleton exclusion
        return Ok(CorefReport {
            muc: ScoreTriple::perfect(),
            muc_undefined: true,
            b3: ScoreTriple::perfect(),
            ceaf_e: ScoreTriple::perfect(),
            conll: 1.0,
            mentions,
        });
    }
    let (m, undefined) = muc_clusters(&key, &resp);
    let b3 = b3_clusters(&key, &resp);
    let ce = ceaf_clusters(&key, &resp);
    let conll = if undefined {
        (b3.f1 + ce.f1) / 2.0
    } else {
        (m.f1 + b3.f1 + ce.f1) / 3.0
    };
    Ok(CorefReport {
        muc: m,
        muc_undefined: undefined,
        b3,
        ceaf_e: ce,
        conll,
        mentions,
    })
}

/// Maximum-weight assignment of rows to columns (Hungarian method).
/// Returns, per row, the matched column; rows beyond the column count may stay unmatched.
pub fn max_weight_matching(w: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = w.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = w[0].len();
    let n = rows.max(cols);
    let top = w.iter().flatten().copied().fold(0.0f64, f64::max);
    // square cost matrix, 1-based, padding costs `top` (weight 0)
    let cost = |i: usize, j: usize| -> f64 {
        if i <= rows && j <= cols {
            top - w[i - 1][j - 1]
        } else {
            top
        }
    };
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; rows];
    for j in 1..=cols {
        if p[j] >= 1 && p[j] <= rows {
            out[p[j] - 1] = Some(j - 1);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cl(groups: &[&[&str]]) -> Clustering {
        Clustering::from_labels(
            groups
                .iter()
                .enumerate()
                .flat_map(|(i, g)| g.iter().map(move |m| (m.to_string(), i))),
        )
    }

    #[test]
    fn canonical_example() {
        let gold = cl(&[&["a", "b", "c"], &["d"]]);
        let pred = cl(&[&["a", "b"], &["c", "d"]]);
        let m = muc(&pred, &gold).unwrap();
        assert!((m.precision - 0.5).abs() < 1e-12 && (m.recall - 0.5).abs() < 1e-12 && (m.f1 - 0.5).abs() < 1e-12);
        let b = b_cubed(&pred, &gold).unwrap();
        assert!((b.precision - 0.75).abs() < 1e-12);
        assert!((b.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((b.f1 - 0.70588).abs() < 1e-5);
        let c = ceaf_e(&pred, &gold).unwrap();
        assert!((c.f1 - 0.73333).abs() < 1e-5);
        assert!((conll_f1(&pred, &gold).unwrap() - 0.64640).abs() < 1e-5);
    }

    #[test]
    fn one_big_cluster_ceaf() {
        let gold = cl(&[&["a", "b", "c"], &["d"]]);
        let pred = cl(&[&["a", "b", "c", "d"]]);
        let c = ceaf_e(&pred, &gold).unwrap();
        assert!((c.recall - 3.0 / 7.0).abs() < 1e-12);
        assert!((c.precision - 6.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn identity_is_perfect() {
        for g in [cl(&[&["a", "b", "c"], &["d"]]), cl(&[&["a"], &["b"], &["c"]]), cl(&[&["x", "y"]])] {
            let r = evaluate(&g, &g, MetricOptions::default()).unwrap();
            assert_eq!(r.b3, ScoreTriple::perfect());
            assert_eq!(r.ceaf_e, ScoreTriple::perfect());
            assert_eq!(r.conll, 1.0);
        }
        let s = cl(&[&["a"], &["b"]]);
        assert!(!muc_defined(&s));
        assert!(evaluate(&s, &s, MetricOptions::default()).unwrap().muc_undefined);
    }

    #[test]
    fn universe_mismatch() {
        assert!(matches!(
            muc(&cl(&[&["a"]]), &cl(&[&["b"]])),
            Err(Error::UniverseMismatch(_))
        ));
    }

    #[test]
    fn singleton_exclusion() {
        let gold = cl(&[&["a", "b"], &["c"], &["d"]]);
        let pred = cl(&[&["a", "b"], &["c", "d"]]);
        let r = evaluate(&pred, &gold, MetricOptions { exclude_singletons: true }).unwrap();
        assert_eq!(r.b3.recall, 1.0);
        assert!(r.b3.precision < 1.0);
    }

    #[test]
    fn splitting_lowers_b3_recall() {
        let gold = cl(&[&["a", "b", "c", "d"]]);
        let split = cl(&[&["a", "b"], &["c", "d"]]);
        assert!(b_cubed(&split, &gold).unwrap().recall < 1.0);
    }

    fn brute(w: &[Vec<f64>]) -> f64 {
        fn go(w: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
            if row == w.len() {
                return 0.0;
            }
            // leaving a row unmatched is allowed when rows exceed columns
            let mut best = if w.len() > w[0].len() { go(w, row + 1, used) } else { f64::NEG_INFINITY };
            for j in 0..w[0].len() {
                if !used[j] {
                    used[j] = true;
                    best = best.max(w[row][j] + go(w, row + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        go(w, 0, &mut vec![false; w[0].len()])
    }

    #[test]
    fn hungarian_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let r = rng.random_range(1..=6);
            let c = rng.random_range(1..=6);
            let w: Vec<Vec<f64>> = (0..r).map(|_| (0..c).map(|_| rng.random::<f64>()).collect()).collect();
            let a = max_weight_matching(&w);
            let mut seen = BTreeSet::new();
            let got: f64 = a
                .iter()
                .enumerate()
                .filter_map(|(i, j)| j.map(|j| {
                    assert!(seen.insert(j));
                    w[i][j]
                }))
                .sum();
            assert!((got - brute(&w)).abs() < 1e-9, "{w:?}");
        }
    }
}
