//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use xcoref::bench::{lemma_baseline, pairwise_count, sequential_bound_check, streaming_cost};
use xcoref::composer::ClusterState;
use xcoref::corpus::parse_corpus;
use xcoref::params::Model as GenericModel;
use xcoref::topics::{clustering_quality, default_stopwords, kmeans, tfidf_features};
use xcoref::trainer::{gradient_check, Objective};
use xcoref::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome {
        pass,
        detail: detail.into(),
    })
}

fn main() {
    let criteria: [(&str, fn() -> Result<Outcome>); 9] = [
        ("gradient correctness", gradient_correctness),
        ("metric oracle suite", metric_oracles),
        ("incremental composition equivalence", incremental_composition),
        ("complexity bound", complexity),
        ("streaming equivalence", streaming_equivalence),
        ("learning sanity", learning_sanity),
        ("event-mode ablation direction", event_ablation),
        ("topic clustering", topic_clustering),
        ("teacher-forcing exactness", teacher_forcing),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let started = Instant::now();
        let (pass, detail) = match run() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let secs = started.elapsed().as_secs_f64();
        println!("{} {name}: {detail} [{secs:.1}s]", if pass { "PASS" } else { "FAIL" });
        if !pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

// -- gradient correctness

/// Two documents in one topic. In entity mode every step after the first
/// document sees three candidates, and `e12` takes part in two events so the
/// recurrent weights see a sequence. In event mode the last trigger sees
/// three candidates and both argument-coreference gate values occur.
const GRAD_CORPUS: &str = r#"{"doc_id":"d1","topic_gold":"t","tokens":["a","b","c","d"],"mentions":[{"mention_id":"e11","kind":"entity","start":0,"end":0,"gold_cluster":"P"},{"mention_id":"v11","kind":"event","start":1,"end":1,"gold_cluster":"X","args":[{"role":"ARG0","mention_id":"e11"},{"role":"ARG1","mention_id":"e12"}]},{"mention_id":"e12","kind":"entity","start":2,"end":2,"gold_cluster":"O"},{"mention_id":"v12","kind":"event","start":3,"end":3,"gold_cluster":"Y","args":[{"role":"ARG0","mention_id":"e12"}]}]}
{"doc_id":"d2","topic_gold":"t","tokens":["a","b","c","d","e"],"mentions":[{"mention_id":"e21","kind":"entity","start":0,"end":0,"gold_cluster":"P"},{"mention_id":"v21","kind":"event","start":1,"end":1,"gold_cluster":"X","args":[{"role":"ARG0","mention_id":"e21"},{"role":"ARG1","mention_id":"e22"}]},{"mention_id":"e22","kind":"entity","start":2,"end":2,"gold_cluster":"O"},{"mention_id":"v22","kind":"event","start":3,"end":3,"gold_cluster":"Z","args":[{"role":"ARG1","mention_id":"e23"}]},{"mention_id":"e23","kind":"entity","start":4,"end":4,"gold_cluster":"U"}]}"#;

fn gradient_correctness() -> Result<Outcome> {
    const TOL: f64 = 1e-4;
    let mut worst = (0.0f64, String::new());
    let mut checked = 0;
    for mode in [MentionKind::Entity, MentionKind::Event] {
        let corpus = parse_corpus(GRAD_CORPUS, mode)?;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut emb = EmbeddingStore::new(4);
        for d in &corpus.documents {
            let v = |rng: &mut ChaCha8Rng| (0..4).map(|_| rng.random_range(-1.0f32..1.0)).collect::<Vec<f32>>();
            let ctx = v(&mut rng);
            let toks: Vec<Vec<f32>> = (0..d.tokens.len()).map(|_| v(&mut rng)).collect();
            emb.insert(d.doc_id.clone(), &ctx, &toks)?;
        }
        let gold = corpus.gold_clustering(mode)?;
        let entities = corpus.gold_clustering(MentionKind::Entity)?;
        let cfg = Config {
            d_arg: 3,
            d_f: 2,
            k: 2,
            d_p: 3,
            seed: 5,
            ..Config::new(mode, 4)
        };
        let model = GenericModel::<f64>::init(cfg)?;
        let obj = Objective {
            corpus: &corpus,
            embeddings: &emb,
            gold: &gold,
            entities: (mode == MentionKind::Event).then_some(&entities),
            topics: None,
        };
        for r in gradient_check(&model, &obj, 1e-4)? {
            checked += 1;
            if r.rel_error >= worst.0 {
                worst = (r.rel_error, format!("{mode} {}", r.tensor));
            }
        }
    }
    outcome(
        worst.0 < TOL,
        format!(
            "{checked} tensors over both modes, max relative error {:.2e} ({}), tolerance {TOL:.0e}",
            worst.0, worst.1
        ),
    )
}

// -- metrics

fn clustering(groups: &[&[&str]]) -> Clustering {
    Clustering::from_labels(
        groups
            .iter()
            .enumerate()
            .flat_map(|(i, g)| g.iter().map(move |m| (m.to_string(), i))),
    )
}

/// Optimal entity alignment by trying every injective mapping.
fn ceaf_brute(pred: &Clustering, gold: &Clustering) -> (f64, f64) {
    let (k, r) = (gold.clusters(), pred.clusters());
    let phi = |a: &Vec<String>, b: &Vec<String>| {
        let common = a.iter().filter(|m| b.contains(m)).count();
        2.0 * common as f64 / (a.len() + b.len()) as f64
    };
    let n = k.len().max(r.len());
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = 0.0f64;
    permute(&mut perm, 0, &mut |p| {
        let s: f64 = (0..k.len()).filter(|&i| p[i] < r.len()).map(|i| phi(&k[i], &r[p[i]])).sum();
        best = best.max(s);
    });
    (best / r.len() as f64, best / k.len() as f64)
}

fn permute(p: &mut Vec<usize>, i: usize, f: &mut impl FnMut(&[usize])) {
    if i == p.len() {
        f(p);
        return;
    }
    for j in i..p.len() {
        p.swap(i, j);
        permute(p, i + 1, f);
        p.swap(i, j);
    }
}

fn metric_oracles() -> Result<Outcome> {
    const TOL: f64 = 1e-5;
    let gold = clustering(&[&["a", "b", "c"], &["d"]]);
    let pred = clustering(&[&["a", "b"], &["c", "d"]]);
    let got = [
        muc(&pred, &gold)?.f1,
        b_cubed(&pred, &gold)?.f1,
        ceaf_e(&pred, &gold)?.f1,
        conll_f1(&pred, &gold)?,
    ];
    let want = [0.5, 0.70588, 0.73333, 0.64640];
    let canonical = got.iter().zip(want).all(|(g, w)| (g - w).abs() < TOL);

    let linked = [
        clustering(&[&["a", "b", "c"], &["d"]]),
        clustering(&[&["a", "b"], &["c", "d"], &["e"]]),
        clustering(&[&["a", "b", "c", "d", "e"]]),
    ];
    let mut identity = true;
    for c in &linked {
        identity &= muc(c, c)?.f1 == 1.0 && b_cubed(c, c)?.f1 == 1.0 && ceaf_e(c, c)?.f1 == 1.0 && conll_f1(c, c)? == 1.0;
    }
    let singletons = clustering(&[&["a"], &["b"], &["c"]]);
    identity &= b_cubed(&singletons, &singletons)?.f1 == 1.0
        && ceaf_e(&singletons, &singletons)?.f1 == 1.0
        && conll_f1(&singletons, &singletons)? == 1.0;

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(1..=9);
        let kg = rng.random_range(1..=n.min(6));
        let kp = rng.random_range(1..=n.min(6));
        let ids: Vec<String> = (0..n).map(|i| format!("m{i}")).collect();
        let labels = |k: usize, rng: &mut ChaCha8Rng| {
            // first k mentions seed the k clusters so none is empty
            let mut l: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
            l.shuffle(rng);
            Clustering::from_labels(ids.iter().cloned().zip(l))
        };
        let g = labels(kg, &mut rng);
        let p = labels(kp, &mut rng);
        let (bp, br) = ceaf_brute(&p, &g);
        let s = ceaf_e(&p, &g)?;
        worst = worst.max((s.precision - bp).abs()).max((s.recall - br).abs());
    }
    outcome(
        canonical && identity && worst < TOL,
        format!(
            "canonical muc/b3/ceaf_e/conll = {:.5}/{:.5}/{:.5}/{:.5}, identity cases exact: {identity}, \
             200 ceaf_e instances max deviation from brute force {worst:.1e}, tolerance {TOL:.0e}",
            got[0], got[1], got[2], got[3]
        ),
    )
}

// -- incremental composition

fn incremental_composition() -> Result<Outcome> {
    const TOL: f64 = 1e-6;
    const DIM: usize = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut state = ClusterState::<f32>::new(DIM);
    let mut members: Vec<Vec<Vec<f32>>> = Vec::new();
    let mut worst = 0.0f64;
    for op in 0..1000 {
        let v: Vec<f32> = (0..DIM).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let id = format!("m{op}");
        if members.is_empty() || rng.random_bool(0.3) {
            state.new_cluster(&v, &id)?;
            members.push(vec![v]);
        } else {
            let c = rng.random_range(0..members.len());
            state.add_member(c, &v, &id)?;
            members[c].push(v);
        }
        for (c, ms) in members.iter().enumerate() {
            let rep = state.cluster(c)?.rep();
            for (j, r) in rep.iter().enumerate() {
                let mean = ms.iter().map(|m| m[j] as f64).sum::<f64>() / ms.len() as f64;
                worst = worst.max((*r as f64 - mean).abs());
            }
        }
    }
    outcome(
        worst <= TOL,
        format!(
            "1000 operations, {} clusters, max component deviation {worst:.2e}, tolerance {TOL:.0e}",
            members.len()
        ),
    )
}

// -- complexity

fn one_topic(docs: usize, clusters: usize, mentions_per_doc: usize, seed: u64) -> SynthConfig {
    SynthConfig {
        n_topics: 1,
        docs_per_topic: docs,
        clusters_per_topic: clusters,
        mentions_per_doc,
        d_tok: 4,
        separation: 8.0,
        event_mode: false,
        args_per_event: 0,
        seed,
    }
}

fn small_model(mode: MentionKind, d_tok: usize, seed: u64) -> Result<GenericModel<f64>> {
    GenericModel::init(Config {
        d_arg: 3,
        d_f: 2,
        k: 2,
        d_p: 3,
        seed,
        ..Config::new(mode, d_tok)
    })
}

/// `data` followed by a copy of every document under new ids.
fn doubled(data: &SynthData) -> Result<(Corpus, EmbeddingStore, Clustering)> {
    let mut docs = data.corpus.documents.clone();
    let mut emb = data.embeddings.clone();
    for d in &data.corpus.documents {
        let mut c = d.clone();
        c.doc_id = format!("{}_copy", d.doc_id);
        for m in &mut c.mentions {
            m.mention_id = format!("{}_copy", m.mention_id);
        }
        let toks: Vec<Vec<f32>> = (0..d.tokens.len())
            .map(|i| data.embeddings.token(&d.doc_id, i).map(<[f32]>::to_vec))
            .collect::<Result<_>>()?;
        emb.insert(c.doc_id.clone(), data.embeddings.context(&d.doc_id)?, &toks)?;
        docs.push(c);
    }
    let corpus = Corpus::from_documents(data.corpus.mode, docs)?;
    let gold = corpus.gold_clustering(corpus.mode)?;
    Ok((corpus, emb, gold))
}

fn complexity() -> Result<Outcome> {
    let model = small_model(MentionKind::Entity, 4, 0)?;

    // m = 1000, c = 100
    let data = generate(&one_topic(100, 100, 10, 1))?;
    let m = data.corpus.num_target_mentions() as u64;
    let c = data.gold.num_clusters() as u64;
    let run = run_corpus(
        &data.corpus,
        &data.embeddings,
        &model,
        RunOptions {
            teacher: Some(&data.gold),
            ..Default::default()
        },
    )?;
    let bound = sequential_bound_check(run.trace(), c, m)?;
    let pairwise = pairwise_count(&data.corpus, None)?;
    let ratio = bound.sequential_invocations as f64 / pairwise as f64;
    let sequential_ok = m == 1000 && c == 100 && bound.sequential_invocations <= 101_000 && pairwise == 499_500 && ratio < 0.21;

    // streaming: m = 1000 and m = 2000 at c = 50, one new 10-mention document
    let (base, extra) = generate_with_dev(&one_topic(100, 50, 10, 2), 1)?;
    let new_doc = &extra.corpus.documents[0];
    let (dcorpus, demb, dgold) = doubled(&base)?;
    let mut costs = Vec::new();
    for (corpus, emb, gold) in [
        (&base.corpus, &base.embeddings, &base.gold),
        (&dcorpus, &demb, &dgold),
    ] {
        let state = run_corpus(
            corpus,
            emb,
            &model,
            RunOptions {
                teacher: Some(gold),
                ..Default::default()
            },
        )?
        .state;
        costs.push(streaming_cost(&state, new_doc, "t00", &extra.embeddings, &model, None)?);
    }
    let (a, b) = (&costs[0], &costs[1]);
    let streaming_ok = a.m == 1000
        && b.m == 2000
        && a.c == 50
        && b.c == 50
        && a.new_mentions == 10
        && a.ours <= 610
        && a.pairwise == 10_045
        && a.ours == b.ours;
    outcome(
        sequential_ok && streaming_ok,
        format!(
            "m={m} c={c}: {} invocations <= (c+1)m = {}, pairwise {pairwise}, ratio {ratio:.4} < 0.21; \
             streaming 10 mentions at c=50: {} comparisons (m=1000) and {} (m=2000) <= 610, pairwise {}",
            bound.sequential_invocations, bound.bound_c1m, a.ours, b.ours, a.pairwise
        ),
    )
}

// -- streaming equivalence

fn random_config(rng: &mut ChaCha8Rng, seed: u64) -> SynthConfig {
    let event_mode = rng.random_bool(0.5);
    let docs = rng.random_range(2..=4);
    let mpd = rng.random_range(1..=4);
    SynthConfig {
        n_topics: rng.random_range(1..=3),
        docs_per_topic: docs,
        clusters_per_topic: rng.random_range(1..=docs * mpd),
        mentions_per_doc: mpd,
        d_tok: 3,
        separation: rng.random_range(0.0..6.0),
        event_mode,
        args_per_event: if event_mode { rng.random_range(1..=2) } else { rng.random_range(0..=2) },
        seed,
    }
}

fn streaming_equivalence() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut equal = 0;
    for i in 0..20u64 {
        let cfg = random_config(&mut rng, 100 + i);
        let (base, extra) = generate_with_dev(&cfg, 1)?;
        // the last topic's new document sorts after every base document
        let new_doc: &Document = extra.corpus.documents.last().expect("one new doc per topic");
        let topic = new_doc.topic_gold.clone().expect("synthetic docs carry topics");
        let mut docs = base.corpus.documents.clone();
        docs.push(new_doc.clone());
        let full = Corpus::from_documents(cfg.mode(), docs)?;
        let mut emb = base.embeddings.clone();
        let toks: Vec<Vec<f32>> = (0..new_doc.tokens.len())
            .map(|t| extra.embeddings.token(&new_doc.doc_id, t).map(<[f32]>::to_vec))
            .collect::<Result<_>>()?;
        emb.insert(new_doc.doc_id.clone(), extra.embeddings.context(&new_doc.doc_id)?, &toks)?;
        let entities = full.gold_clustering(MentionKind::Entity)?;
        let ents = cfg.event_mode.then_some(&entities);
        let model = small_model(cfg.mode(), 3, i)?;

        let one_pass = run_corpus(
            &full,
            &emb,
            &model,
            RunOptions {
                entities: ents,
                ..Default::default()
            },
        )?;
        let mut state = run_corpus(
            &base.corpus,
            &emb,
            &model,
            RunOptions {
                entities: ents,
                ..Default::default()
            },
        )?
        .state;
        stream_add_document(&mut state, new_doc, &topic, &emb, &model, ents)?;
        if state.clustering() == one_pass.clustering {
            equal += 1;
        }
    }
    outcome(equal == 20, format!("{equal}/20 random corpora give identical clusterings"))
}

// -- learning

fn predicted_topics(corpus: &Corpus, k: usize) -> Result<BTreeMap<String, String>> {
    let km = kmeans(&tfidf_features(corpus, &default_stopwords()), k, 0)?;
    Ok(km.assignment.into_iter().map(|(d, t)| (d, format!("k{t}"))).collect())
}

fn learning_config(mode: MentionKind, d_tok: usize) -> Config {
    Config {
        d_arg: 8,
        d_f: 4,
        k: 2,
        d_p: 8,
        learning_rate: 1e-3,
        max_epochs: 80,
        patience: 80,
        shuffle_documents: true,
        seed: 0,
        ..Config::new(mode, d_tok)
    }
}

fn learning_sanity() -> Result<Outcome> {
    let synth = SynthConfig {
        n_topics: 2,
        docs_per_topic: 10,
        clusters_per_topic: 8,
        mentions_per_doc: 6,
        d_tok: 32,
        separation: 8.0,
        event_mode: false,
        args_per_event: 2,
        seed: 0,
    };
    let (train_data, dev) = generate_with_dev(&synth, 10)?;
    let train_topics = predicted_topics(&train_data.corpus, 2)?;
    let dev_topics = predicted_topics(&dev.corpus, 2)?;
    let cfg = learning_config(MentionKind::Entity, 32);
    let out = train::<f32>(
        &cfg,
        &train_data.corpus,
        &train_data.embeddings,
        &dev.corpus,
        &dev.embeddings,
        TrainInputs {
            train_topics: Some(&train_topics),
            dev_topics: Some(&dev_topics),
            dev_entities: None,
        },
        |_| {},
    )?;
    let lemma = conll_f1(&lemma_baseline(&dev.corpus, Some(&dev_topics), None)?, &dev.gold)?;
    let best = out.best_dev_f1;
    let untrained = out.initial_dev_f1();
    outcome(
        best >= 0.90 && best - lemma >= 0.2 && best - untrained >= 0.2,
        format!(
            "dev CoNLL F1 {best:.3} at epoch {} (>= 0.90), lemma baseline {lemma:.3}, untrained {untrained:.3} (margin >= 0.2)",
            out.best_epoch
        ),
    )
}

fn event_ablation() -> Result<Outcome> {
    let synth = SynthConfig {
        n_topics: 2,
        docs_per_topic: 10,
        clusters_per_topic: 8,
        mentions_per_doc: 6,
        d_tok: 32,
        separation: 8.0,
        event_mode: true,
        args_per_event: 2,
        seed: 0,
    };
    let (train_data, dev) = generate_with_dev(&synth, 10)?;
    let mut scores = Vec::new();
    for use_arg_feature in [true, false] {
        let cfg = Config {
            use_arg_feature,
            ..learning_config(MentionKind::Event, 32)
        };
        let out = train::<f32>(
            &cfg,
            &train_data.corpus,
            &train_data.embeddings,
            &dev.corpus,
            &dev.embeddings,
            TrainInputs::default(),
            |_| {},
        )?;
        scores.push(out.best_dev_f1);
    }
    outcome(
        scores[1] < scores[0],
        format!(
            "dev CoNLL F1 {:.3} with the argument feature, {:.3} without (delta {:+.3})",
            scores[0],
            scores[1],
            scores[1] - scores[0]
        ),
    )
}

// -- topics

fn pair_ari(pred: &[usize], gold: &[usize]) -> f64 {
    let n = pred.len();
    let (mut both, mut only_p, mut only_g, mut total) = (0f64, 0f64, 0f64, 0f64);
    for i in 0..n {
        for j in i + 1..n {
            let p = pred[i] == pred[j];
            let g = gold[i] == gold[j];
            total += 1.0;
            match (p, g) {
                (true, true) => both += 1.0,
                (true, false) => only_p += 1.0,
                (false, true) => only_g += 1.0,
                _ => {}
            }
        }
    }
    let (sp, sg) = (both + only_p, both + only_g);
    let expected = sp * sg / total;
    let max = (sp + sg) / 2.0;
    if max == expected {
        return 1.0;
    }
    (both - expected) / (max - expected)
}

/// Homogeneity, completeness and V-measure through mutual information.
fn mi_scores(pred: &[usize], gold: &[usize]) -> (f64, f64, f64) {
    let n = pred.len() as f64;
    let kp = pred.iter().max().unwrap() + 1;
    let kg = gold.iter().max().unwrap() + 1;
    let mut table = vec![vec![0f64; kp]; kg];
    for (p, g) in pred.iter().zip(gold) {
        table[*g][*p] += 1.0;
    }
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..kp).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let h = |v: &[f64]| -> f64 { v.iter().filter(|&&c| c > 0.0).map(|&c| -(c / n) * (c / n).ln()).sum() };
    let mut mi = 0.0;
    for (i, r) in table.iter().enumerate() {
        for (j, &c) in r.iter().enumerate() {
            if c > 0.0 {
                mi += c / n * (c * n / (rows[i] * cols[j])).ln();
            }
        }
    }
    let (hg, hp) = (h(&rows), h(&cols));
    let homo = if hg == 0.0 { 1.0 } else { mi / hg };
    let comp = if hp == 0.0 { 1.0 } else { mi / hp };
    let v = if homo + comp == 0.0 { 0.0 } else { 2.0 * homo * comp / (homo + comp) };
    (homo, comp, v)
}

fn topic_clustering() -> Result<Outcome> {
    const TOL: f64 = 1e-9;
    let mut min_ari = f64::MAX;
    let mut corpora = 0;
    for (seed, n_topics) in [(0u64, 2usize), (1, 3), (2, 4), (3, 5), (4, 3)] {
        let data = generate(&SynthConfig {
            n_topics,
            docs_per_topic: 8,
            seed,
            ..Default::default()
        })?;
        let km = kmeans(&tfidf_features(&data.corpus, &default_stopwords()), n_topics, seed)?;
        let q = clustering_quality(&km.assignment, &data.topics)?;
        min_ari = min_ari.min(q.ari);
        corpora += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(2..30);
        let kp = rng.random_range(1..6);
        let kg = rng.random_range(1..6);
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..kp)).collect();
        let gold: Vec<usize> = (0..n).map(|_| rng.random_range(0..kg)).collect();
        let to_map = |v: &[usize]| -> BTreeMap<String, usize> { v.iter().enumerate().map(|(i, &l)| (format!("d{i}"), l)).collect() };
        let q = clustering_quality(&to_map(&pred), &to_map(&gold))?;
        // relabel densely so the oracle's table has no empty rows or columns
        let dense = |v: &[usize]| -> Vec<usize> {
            let mut seen = BTreeMap::new();
            v.iter().map(|l| { let k = seen.len(); *seen.entry(*l).or_insert(k) }).collect()
        };
        let (p, g) = (dense(&pred), dense(&gold));
        let (h, c, v) = mi_scores(&p, &g);
        let ari = pair_ari(&p, &g);
        for (a, b) in [(q.homogeneity, h), (q.completeness, c), (q.v_measure, v), (q.ari, ari)] {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(
        min_ari >= 0.9 && worst <= TOL,
        format!(
            "min ARI {min_ari:.3} over {corpora} corpora (>= 0.9); quality vs contingency oracles max deviation {worst:.1e} over 100 labelings, tolerance {TOL:.0e}"
        ),
    )
}

// -- teacher forcing

fn teacher_forcing() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut exact = 0;
    let runs = 20;
    for i in 0..runs {
        let cfg = random_config(&mut rng, 500 + i);
        let data = generate(&cfg)?;
        let model = small_model(cfg.mode(), 3, i)?;
        let out = run_corpus(
            &data.corpus,
            &data.embeddings,
            &model,
            RunOptions {
                entities: cfg.event_mode.then_some(&data.entity_gold),
                teacher: Some(&data.gold),
                ..Default::default()
            },
        )?;
        if out.clustering.same_partition(&data.gold) && conll_f1(&out.clustering, &data.gold)? == 1.0 {
            exact += 1;
        }
    }
    outcome(
        exact == runs,
        format!("{exact}/{runs} random corpora reproduce gold exactly (CoNLL F1 = 1.0)"),
    )
}
