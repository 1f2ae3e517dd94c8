//! Document topic clusters: TF-IDF over word 1-3-grams, k-means on the
//! cosine-normalized vectors, and external clustering quality scores.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::hash::Hash;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");
const MAX_ITER: usize = 100;
/// Seeded restarts per call; the run with the lowest final objective wins.
pub const RESTARTS: usize = 10;

/// The bundled English stop-word list.
pub fn default_stopwords() -> HashSet<String> {
    parse_stopwords(DEFAULT_STOPWORDS)
}

/// One word per line; blank lines and `#` comments ignored.
pub fn parse_stopwords(text: &str) -> HashSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

/// Sparse TF-IDF rows over a shared vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct TfidfMatrix {
    pub vocab: Vec<String>,
    pub doc_ids: Vec<String>,
    /// Per document, (n-gram id, weight) sorted by id; zero weights omitted.
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl TfidfMatrix {
    pub fn weight(&self, doc: usize, ngram: &str) -> f64 {
        let Some(id) = self.vocab.iter().position(|v| v == ngram) else {
            return 0.0;
        };
        self.rows[doc]
            .iter()
            .find(|(i, _)| *i == id)
            .map_or(0.0, |(_, w)| *w)
    }
}

fn ngrams(tokens: &[String], stop: &HashSet<String>) -> Vec<String> {
    let words: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
    // punctuation-only tokens act as stop words
    let blocked: Vec<bool> = words
        .iter()
        .map(|w| stop.contains(w) || !w.chars().any(char::is_alphanumeric))
        .collect();
    let mut out = Vec::new();
    for n in 1..=3 {
        for i in 0..words.len().saturating_sub(n - 1) {
            if blocked[i..i + n].iter().any(|&b| b) {
                continue;
            }
            out.push(words[i..i + n].join(" "));
        }
    }
    out
}

/// tf = raw count, idf = ln(N / df), weight = tf * idf.
pub fn tfidf_features(corpus: &Corpus, stopwords: &HashSet<String>) -> TfidfMatrix {
    let counts: Vec<HashMap<String, usize>> = corpus
        .documents
        .iter()
        .map(|d| {
            let mut c = HashMap::new();
            for g in ngrams(&d.tokens, stopwords) {
                *c.entry(g).or_insert(0) += 1;
            }
            c
        })
        .collect();
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for c in &counts {
        for g in c.keys() {
            *df.entry(g.as_str()).or_insert(0) += 1;
        }
    }
    let n = corpus.documents.len() as f64;
    let vocab: Vec<String> = df.keys().map(|s| s.to_string()).collect();
    let ids: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let rows = counts
        .iter()
        .map(|c| {
            let mut row: Vec<(usize, f64)> = c
                .iter()
                .map(|(g, &tf)| (ids[g.as_str()], tf as f64 * (n / df[g.as_str()] as f64).ln()))
                .filter(|&(_, w)| w != 0.0)
                .collect();
            row.sort_by_key(|&(i, _)| i);
            row
        })
        .collect();
    TfidfMatrix {
        vocab,
        doc_ids: corpus.documents.iter().map(|d| d.doc_id.clone()).collect(),
        rows,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub assignment: BTreeMap<String, usize>,
    /// Sum of squared distances after each assignment step.
    pub objective: Vec<f64>,
    pub iterations: usize,
}

fn normalize(row: &[(usize, f64)]) -> Vec<(usize, f64)> {
    let n = row.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
    if n == 0.0 {
        return row.to_vec();
    }
    row.iter().map(|&(i, w)| (i, w / n)).collect()
}

fn sq_dist(x: &[(usize, f64)], x_sq: f64, c: &[f64], c_sq: f64) -> f64 {
    let dot: f64 = x.iter().map(|&(i, w)| w * c[i]).sum();
    (x_sq - 2.0 * dot + c_sq).max(0.0)
}

fn densify(x: &[(usize, f64)], dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    for &(i, w) in x {
        v[i] = w;
    }
    v
}

/// Lloyd's algorithm with k-means++ seeding on cosine-normalized rows,
/// best of `RESTARTS` runs drawn from one seeded stream.
pub fn kmeans(features: &TfidfMatrix, k: usize, seed: u64) -> Result<KMeansResult> {
    let n = features.rows.len();
    if k == 0 || n < k {
        return Err(Error::TooFewDocuments { k, docs: n });
    }
    let xs: Vec<Vec<(usize, f64)>> = features.rows.iter().map(|r| normalize(r)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<Run> = None;
    for _ in 0..RESTARTS {
        let run = lloyd(&xs, features.vocab.len(), k, &mut rng);
        if best.as_ref().is_none_or(|b| run.final_objective() < b.final_objective()) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one restart");
    Ok(KMeansResult {
        assignment: features.doc_ids.iter().cloned().zip(best.assign).collect(),
        objective: best.objective,
        iterations: best.iterations,
    })
}

struct Run {
    assign: Vec<usize>,
    objective: Vec<f64>,
    iterations: usize,
}

impl Run {
    fn final_objective(&self) -> f64 {
        *self.objective.last().expect("one iteration at least")
    }
}

fn lloyd(xs: &[Vec<(usize, f64)>], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Run {
    let n = xs.len();
    let x_sq: Vec<f64> = xs.iter().map(|x| x.iter().map(|(_, w)| w * w).sum()).collect();

    // k-means++
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(&xs[i], x_sq[i], &densify(&xs[chosen[0]], dim), x_sq[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && r < d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            // rounding at the tail: fall back to the last positive weight
            if d2[pick] == 0.0 {
                pick = d2.iter().rposition(|&d| d > 0.0).expect("total > 0");
            }
            pick
        } else {
            let rest: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            rest[rng.random_range(0..rest.len())]
        };
        chosen.push(next);
        let c = densify(&xs[next], dim);
        for i in 0..n {
            d2[i] = d2[i].min(sq_dist(&xs[i], x_sq[i], &c, x_sq[next]));
        }
    }
    let mut centroids: Vec<Vec<f64>> = chosen.iter().map(|&i| densify(&xs[i], dim)).collect();

    let mut assign = vec![usize::MAX; n];
    let mut objective = Vec::new();
    let mut iterations = 0;
    for _ in 0..MAX_ITER {
        iterations += 1;
        let c_sq: Vec<f64> = centroids.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
        let mut changed = false;
        let mut dists = vec![0.0; n];
        for i in 0..n {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, c) in centroids.iter().enumerate() {
                let d = sq_dist(&xs[i], x_sq[i], c, c_sq[j]);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            if assign[i] != best {
                changed = true;
                assign[i] = best;
            }
            dists[i] = best_d;
        }
        // empty clusters take the point farthest from its centroid
        let mut sizes = vec![0usize; k];
        for &a in &assign {
            sizes[a] += 1;
        }
        for j in 0..k {
            if sizes[j] == 0 {
                let far = (0..n)
                    .filter(|&i| sizes[assign[i]] > 1)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .expect("n >= k leaves a donor");
                sizes[assign[far]] -= 1;
                assign[far] = j;
                sizes[j] = 1;
                dists[far] = 0.0;
                changed = true;
            }
        }
        objective.push(dists.iter().sum());
        if !changed {
            break;
        }
        for c in centroids.iter_mut() {
            c.iter_mut().for_each(|v| *v = 0.0);
        }
        for i in 0..n {
            for &(f, w) in &xs[i] {
                centroids[assign[i]][f] += w;
            }
        }
        for (j, c) in centroids.iter_mut().enumerate() {
            let s = sizes[j] as f64;
            c.iter_mut().for_each(|v| *v /= s);
        }
    }
    Run {
        assign,
        objective,
        iterations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterQuality {
    pub homogeneity: f64,
    pub completeness: f64,
    pub v_measure: f64,
    pub ari: f64,
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Homogeneity, completeness, V-measure and adjusted Rand index of `pred` against `gold`.
pub fn clustering_quality<A, B>(pred: &BTreeMap<String, A>, gold: &BTreeMap<String, B>) -> Result<ClusterQuality>
where
    A: Eq + Hash + Clone,
    B: Eq + Hash + Clone,
{
    let pk: BTreeSet<&String> = pred.keys().collect();
    let gk: BTreeSet<&String> = gold.keys().collect();
    if pk != gk {
        return Err(Error::CoverageMismatch(format!(
            "{} predicted vs {} gold documents",
            pk.len(),
            gk.len()
        )));
    }
    let n = gold.len();
    if n == 0 {
        return Err(Error::CoverageMismatch("no documents".into()));
    }
    let mut table: HashMap<(B, A), usize> = HashMap::new();
    let mut gold_n: HashMap<B, usize> = HashMap::new();
    let mut pred_n: HashMap<A, usize> = HashMap::new();
    for (doc, g) in gold {
        let p = &pred[doc];
        *table.entry((g.clone(), p.clone())).or_default() += 1;
        *gold_n.entry(g.clone()).or_default() += 1;
        *pred_n.entry(p.clone()).or_default() += 1;
    }
    let nf = n as f64;
    let h_c = entropy(gold_n.values().copied(), nf);
    let h_k = entropy(pred_n.values().copied(), nf);
    // conditional entropies from the contingency table
    let mut h_c_given_k = 0.0;
    let mut h_k_given_c = 0.0;
    for ((g, p), &c) in &table {
        let c = c as f64;
        h_c_given_k -= c / nf * (c / pred_n[p] as f64).ln();
        h_k_given_c -= c / nf * (c / gold_n[g] as f64).ln();
    }
    let homogeneity = if h_c == 0.0 { 1.0 } else { 1.0 - h_c_given_k / h_c };
    let completeness = if h_k == 0.0 { 1.0 } else { 1.0 - h_k_given_c / h_k };
    let v_measure = if homogeneity + completeness == 0.0 {
        0.0
    } else {
        2.0 * homogeneity * completeness / (homogeneity + completeness)
    };

    // adjusted Rand index via the pair confusion matrix
    let pairs = |x: usize| (x * x.saturating_sub(1) / 2) as f64;
    let total = pairs(n);
    let same_both: f64 = table.values().map(|&c| pairs(c)).sum();
    let same_gold: f64 = gold_n.values().map(|&c| pairs(c)).sum();
    let same_pred: f64 = pred_n.values().map(|&c| pairs(c)).sum();
    let tp = same_both;
    let fn_ = same_gold - same_both;
    let fp = same_pred - same_both;
    let tn = total - tp - fn_ - fp;
    let ari = if fn_ == 0.0 && fp == 0.0 {
        1.0
    } else {
        2.0 * (tp * tn - fn_ * fp) / ((tp + fn_) * (fn_ + tn) + (tp + fp) * (fp + tn))
    };
    Ok(ClusterQuality {
        homogeneity,
        completeness,
        v_measure,
        ari,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_corpus, MentionKind};

    fn corpus(docs: &[(&str, &str)]) -> Corpus {
        let text: Vec<String> = docs
            .iter()
            .map(|(id, text)| {
                let toks: Vec<String> = text.split_whitespace().map(|t| format!("{t:?}")).collect();
                format!(r#"{{"doc_id":"{id}","tokens":[{}],"mentions":[]}}"#, toks.join(","))
            })
            .collect();
        parse_corpus(&text.join("\n"), MentionKind::Entity).unwrap()
    }

    fn map(pairs: &[(&str, usize)]) -> BTreeMap<String, usize> {
        pairs.iter().map(|(d, c)| (d.to_string(), *c)).collect()
    }

    #[test]
    fn tfidf_cases() {
        let c = corpus(&[("d1", "storm storm storm hit coast"), ("d2", "coast quiet")]);
        let m = tfidf_features(&c, &default_stopwords());
        assert_eq!(m.weight(0, "coast"), 0.0);
        assert!((m.weight(0, "storm") - 3.0 * 2f64.ln()).abs() < 1e-12);
        assert!((m.weight(0, "storm hit coast") - 2f64.ln()).abs() < 1e-12);
        let c = corpus(&[("d1", "the storm"), ("d2", "calm")]);
        let m = tfidf_features(&c, &default_stopwords());
        assert!(!m.vocab.iter().any(|v| v == "the storm" || v == "the"));
        assert!(m.vocab.iter().any(|v| v == "storm"));
    }

    #[test]
    fn k_equal_docs_gives_singletons() {
        let c = corpus(&[("a", "x y"), ("b", "y z"), ("c", "z w")]);
        let r = kmeans(&tfidf_features(&c, &default_stopwords()), 3, 0).unwrap();
        let ids: BTreeSet<usize> = r.assignment.values().copied().collect();
        assert_eq!(ids.len(), 3);
        assert!(matches!(
            kmeans(&tfidf_features(&c, &default_stopwords()), 4, 0),
            Err(Error::TooFewDocuments { k: 4, docs: 3 })
        ));
    }

    #[test]
    fn quality_cases() {
        let gold = map(&[("a", 0), ("b", 0), ("c", 1), ("d", 1)]);
        let q = clustering_quality(&gold, &gold).unwrap();
        assert_eq!((q.homogeneity, q.completeness, q.v_measure, q.ari), (1.0, 1.0, 1.0, 1.0));
        let one = map(&[("a", 7), ("b", 7), ("c", 7), ("d", 7)]);
        let q = clustering_quality(&one, &gold).unwrap();
        assert!(q.homogeneity.abs() < 1e-12);
        assert_eq!(q.completeness, 1.0);
        let cross = map(&[("a", 0), ("b", 1), ("c", 0), ("d", 1)]);
        assert!((clustering_quality(&cross, &gold).unwrap().ari + 0.5).abs() < 1e-12);
        let short = map(&[("a", 0)]);
        assert!(matches!(clustering_quality(&short, &gold), Err(Error::CoverageMismatch(_))));
    }
}
