//! Lexical baselines: Okapi BM25 and the query likelihood model with
//! Jelinek-Mercer smoothing, both over per-topic collection statistics.

mod stats;
mod tokenize;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{represent, DocStore, ReprMode, Topic, TopicSet};
use crate::runio::{RankedRun, RunEntry};
use crate::Pmid;

pub use stats::CollectionStats;
pub use tokenize::{tokenize, TokenStream, Tokenizer};

#[derive(Debug, Error, PartialEq)]
pub enum LexicalError {
    #[error("topic `{topic}`: {} candidate(s) missing from the corpus: {}", .pmids.len(), join(.pmids))]
    Unresolvable { topic: String, pmids: Vec<Pmid> },
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
}

fn join(pmids: &[Pmid]) -> String {
    pmids.iter().map(Pmid::as_str).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LexicalParams {
    /// BM25 term-frequency saturation.
    pub k1: f64,
    /// BM25 length normalisation.
    pub b: f64,
    /// Jelinek-Mercer weight of the collection model.
    pub lambda: f64,
    /// Fraction of the mean positive idf used in place of negative idf.
    pub epsilon: f64,
}

impl Default for LexicalParams {
    fn default() -> Self {
        LexicalParams {
            k1: 1.5,
            b: 0.75,
            lambda: 0.5,
            epsilon: 0.25,
        }
    }
}

impl LexicalParams {
    pub fn validate(&self) -> Result<(), LexicalError> {
        let bad = |msg: String| Err(LexicalError::InvalidParams(msg));
        if !(self.k1 >= 0.0 && self.k1.is_finite()) {
            return bad(format!("k1 must be >= 0, got {}", self.k1));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return bad(format!("b must lie in [0, 1], got {}", self.b));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return bad(format!("lambda must lie in (0, 1), got {}", self.lambda));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be >= 0, got {}", self.epsilon));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Model {
    Bm25,
    Qlm,
}

impl Model {
    pub fn as_str(self) -> &'static str {
        match self {
            Model::Bm25 => "bm25",
            Model::Qlm => "qlm",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bm25" => Ok(Model::Bm25),
            "qlm" => Ok(Model::Qlm),
            other => Err(format!("unknown model `{other}` (expected bm25 or qlm)")),
        }
    }
}

/// Builds statistics over the topic's candidates in representation `mode`.
pub fn build_stats(
    topic: &Topic,
    store: &DocStore,
    mode: ReprMode,
    tokenizer: &Tokenizer,
) -> Result<CollectionStats, LexicalError> {
    let mut missing = Vec::new();
    let mut docs = Vec::with_capacity(topic.pmids.len());
    for pmid in &topic.pmids {
        match store.get(pmid) {
            Some(doc) => docs.push((pmid.clone(), tokenizer.tokenize(&represent(doc, mode).text))),
            None => missing.push(pmid.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(LexicalError::Unresolvable {
            topic: topic.id.clone(),
            pmids: missing,
        });
    }
    Ok(CollectionStats::from_tokens(docs))
}

/// Saturating BM25 term weight without the idf factor.
pub fn bm25_tf_weight(tf: f64, doc_len: f64, avg_doc_len: f64, k1: f64, b: f64) -> f64 {
    if tf <= 0.0 {
        return 0.0;
    }
    let norm = if avg_doc_len > 0.0 {
        1.0 - b + b * doc_len / avg_doc_len
    } else {
        1.0
    };
    tf * (k1 + 1.0) / (tf + k1 * norm)
}

/// `ln((1 - lambda) * tf / |d| + lambda * cf / |C|)`.
pub fn jm_log_prob(tf: f64, doc_len: f64, cf: f64, total_tokens: f64, lambda: f64) -> f64 {
    let p_doc = if doc_len > 0.0 { tf / doc_len } else { 0.0 };
    ((1.0 - lambda) * p_doc + lambda * cf / total_tokens).ln()
}

/// BM25 idf with negative values replaced by `epsilon * mean positive idf`.
/// `None` for terms outside the collection.
pub fn bm25_idf(term: &str, stats: &CollectionStats, epsilon: f64) -> Option<f64> {
    stats.raw_idf(term).map(|idf| {
        if idf < 0.0 {
            epsilon * stats.mean_positive_idf()
        } else {
            idf
        }
    })
}

/// BM25 score of `pmid`, or `None` if the document is not in `stats`.
pub fn bm25_score(
    query: &TokenStream,
    pmid: &Pmid,
    stats: &CollectionStats,
    params: &LexicalParams,
) -> Option<f64> {
    let doc = stats.doc(pmid)?;
    let score = query
        .iter()
        .filter_map(|term| {
            let idf = bm25_idf(term, stats, params.epsilon)?;
            let tf = doc.tf.get(term.as_str()).copied().unwrap_or(0) as f64;
            Some(idf * bm25_tf_weight(tf, doc.len as f64, stats.avg_doc_len(), params.k1, params.b))
        })
        .sum();
    Some(score)
}

/// Query log-likelihood of `pmid` under JM smoothing, or `None` if the
/// document is not in `stats`. Terms absent from the collection are skipped.
pub fn qlm_score(
    query: &TokenStream,
    pmid: &Pmid,
    stats: &CollectionStats,
    params: &LexicalParams,
) -> Option<f64> {
    let doc = stats.doc(pmid)?;
    let total = stats.total_tokens() as f64;
    let score = query
        .iter()
        .filter_map(|term| {
            let cf = stats.cf(term);
            (cf > 0).then(|| {
                let tf = doc.tf.get(term.as_str()).copied().unwrap_or(0) as f64;
                jm_log_prob(tf, doc.len as f64, cf as f64, total, params.lambda)
            })
        })
        .sum();
    Some(score)
}

/// A fully configured lexical ranker.
#[derive(Debug, Clone)]
pub struct Ranker {
    pub model: Model,
    pub mode: ReprMode,
    pub params: LexicalParams,
    pub tokenizer: Tokenizer,
}

impl Ranker {
    pub fn new(model: Model, mode: ReprMode, params: LexicalParams) -> Result<Self, LexicalError> {
        params.validate()?;
        Ok(Ranker {
            model,
            mode,
            params,
            tokenizer: Tokenizer::default(),
        })
    }

    pub fn default_tag(&self) -> String {
        format!("{}-{}", self.model, self.mode)
    }
}

/// Ranks a topic's candidates by descending score, ties by ascending pmid.
pub fn rank_topic(
    ranker: &Ranker,
    topic: &Topic,
    store: &DocStore,
) -> Result<Vec<RunEntry>, LexicalError> {
    let stats = build_stats(topic, store, ranker.mode, &ranker.tokenizer)?;
    let query = ranker.tokenizer.tokenize(&topic.title);
    let score = match ranker.model {
        Model::Bm25 => bm25_score,
        Model::Qlm => qlm_score,
    };
    let scored = topic
        .pmids
        .iter()
        .map(|pmid| {
            let s = score(&query, pmid, &stats, &ranker.params)
                .expect("stats are built over every candidate");
            (pmid.clone(), s)
        })
        .collect();
    Ok(RunEntry::ranked(scored))
}

/// Ranks every topic (in parallel on the current rayon pool) into one run.
pub fn rank_topics(
    ranker: &Ranker,
    topics: &TopicSet,
    store: &DocStore,
    tag: &str,
) -> Result<RankedRun, LexicalError> {
    let ranked: Vec<(String, Vec<RunEntry>)> = topics
        .iter()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|topic| rank_topic(ranker, topic, store).map(|entries| (topic.id.clone(), entries)))
        .collect::<Result<_, _>>()?;
    let topics: BTreeMap<String, Vec<RunEntry>> = ranked.into_iter().collect();
    Ok(RankedRun::from_ranked(tag, topics))
}
