//! Synthetic workloads for the criterion benches.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use screenprio::{DocRecord, DocStore, Pmid, Qrels, RankedRun, Topic, TopicSet};

const VOCAB: &[&str] = &[
    "aspirin", "myocardial", "infarction", "randomized", "trial", "placebo", "cohort", "risk",
    "mortality", "stroke", "diabetes", "insulin", "therapy", "outcome", "patients", "children",
    "screening", "cancer", "biopsy", "imaging", "diagnostic", "accuracy", "sensitivity",
    "specificity", "review", "systematic", "meta", "analysis", "dose", "adverse", "events",
    "hospital", "primary", "care", "intervention", "control", "blood", "pressure", "lipid",
    "statin",
];

fn sentence(rng: &mut ChaCha8Rng, words: usize) -> String {
    (0..words).map(|_| *VOCAB.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn topic(id: String, title: String, pmids: Vec<Pmid>) -> Topic {
    Topic {
        id,
        title,
        boolean_query: String::new(),
        pmids,
        metadata: vec![],
    }
}

/// Topics with `docs_per_topic` candidates each and a store holding every
/// candidate.
pub fn corpus(n_topics: usize, docs_per_topic: usize, seed: u64) -> (TopicSet, DocStore) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = DocStore::new();
    let mut topics = Vec::with_capacity(n_topics);
    let mut next = 10_000_000u64;
    for t in 0..n_topics {
        let mut pmids = Vec::with_capacity(docs_per_topic);
        for _ in 0..docs_per_topic {
            next += 1;
            let title = sentence(&mut rng, 12);
            let abs = sentence(&mut rng, 180);
            store.insert(DocRecord::new(&next.to_string(), &title, &abs).unwrap());
            pmids.push(Pmid::from(next.to_string()));
        }
        topics.push(topic(format!("CD{t:06}"), sentence(&mut rng, 8), pmids));
    }
    (TopicSet::new(topics).unwrap(), store)
}

/// Random runs with roughly `prevalence` relevant candidates per topic.
pub fn judged_run(n_topics: usize, n: usize, prevalence: f64, seed: u64) -> (TopicSet, Qrels, RankedRun) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut topics = Vec::with_capacity(n_topics);
    let mut qrels = Qrels::new();
    let mut scores = BTreeMap::new();
    for t in 0..n_topics {
        let id = format!("CD{t:06}");
        let pmids: Vec<Pmid> = (0..n).map(|i| Pmid::from((i + 1).to_string())).collect();
        let scored = pmids.iter().map(|p| (p.clone(), rng.gen::<f64>())).collect();
        for (i, p) in pmids.iter().enumerate() {
            let relevant = i == 0 || rng.gen_bool(prevalence);
            qrels.insert(&id, p.clone(), u32::from(relevant));
        }
        scores.insert(id.clone(), scored);
        topics.push(topic(id, String::new(), pmids));
    }
    (TopicSet::new(topics).unwrap(), qrels, RankedRun::from_scores("bench", scores))
}

/// Two correlated per-topic score vectors.
pub fn paired_samples(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
    let b = a.iter().map(|x| x + rng.gen_range(-0.1..0.15)).collect();
    (a, b)
}
