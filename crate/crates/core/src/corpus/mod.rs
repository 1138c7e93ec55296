//! Dataset ingestion: topics, qrels, the local document store and the
//! textual representations ranked by the lexical and neural components.

mod pubmed;
mod qrels;
mod store;
mod topics;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::Pmid;

pub use pubmed::{
    efetch_url, fetch_pubmed, parse_efetch_xml, EfetchTransport, FetchError, FetchOptions,
    FetchOutcome, ParsedArticle, TransportError, DEFAULT_ENDPOINT,
};
pub use qrels::{parse_qrels, write_qrels, Qrels};
pub use store::{load_corpus, write_corpus, CorpusLoadReport, DocRecord, DocStore};
pub use topics::{parse_topics, write_topics, Topic, TopicSet};

/// Reserved token separating title and abstract in a TiAb representation.
///
/// Neural scorers map it onto their model's segment separator; the lexical
/// tokenizer removes it.
pub const SEPARATOR: &str = "[SEP]";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate topic id `{0}`")]
    DuplicateTopic(String),
    #[error("topic `{0}` has no candidates")]
    NoCandidates(String),
    #[error("topic `{topic}` lists pmid {pmid} more than once")]
    DuplicateCandidate { topic: String, pmid: Pmid },
    #[error("line {line}: duplicate judgement for ({topic}, {pmid})")]
    DuplicateJudgement {
        line: usize,
        topic: String,
        pmid: Pmid,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CorpusError {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        CorpusError::Parse {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ReprMode {
    Title,
    TiAb,
}

impl ReprMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ReprMode::Title => "title",
            ReprMode::TiAb => "tiab",
        }
    }
}

impl fmt::Display for ReprMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReprMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "title" => Ok(ReprMode::Title),
            "tiab" => Ok(ReprMode::TiAb),
            other => Err(format!(
                "unknown representation `{other}` (expected title or tiab)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocRepresentation {
    pub mode: ReprMode,
    pub text: String,
}

/// Builds the text a ranker sees for `doc`.
///
/// TiAb is `title SEP abstract`; an empty abstract leaves the trailing
/// `"title SEP "`.
pub fn represent(doc: &DocRecord, mode: ReprMode) -> DocRepresentation {
    let text = match mode {
        ReprMode::Title => doc.title.clone(),
        ReprMode::TiAb => format!("{} {} {}", doc.title, SEPARATOR, doc.abstract_text),
    };
    DocRepresentation { mode, text }
}

/// Per-topic findings of [`check_dataset`].
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TopicIngest {
    pub topic_id: String,
    pub candidates: usize,
    /// Relevant documents inside the candidate set (the `R` used by metrics).
    pub relevant: usize,
    /// Candidates with no record in the document store.
    pub missing_documents: Vec<Pmid>,
    /// Judged documents that are not candidates of the topic.
    pub judged_outside_candidates: Vec<Pmid>,
    pub empty_abstracts: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestReport {
    pub topics: Vec<TopicIngest>,
    /// Topics present in qrels but not in the topic file.
    pub qrels_only_topics: Vec<String>,
}

impl IngestReport {
    pub fn missing_documents(&self) -> usize {
        self.topics.iter().map(|t| t.missing_documents.len()).sum()
    }
}

/// Cross-checks topics, qrels and the document store.
pub fn check_dataset(topics: &TopicSet, qrels: &Qrels, store: &DocStore) -> IngestReport {
    let mut report = IngestReport::default();
    for topic in topics.iter() {
        let candidates: BTreeSet<&Pmid> = topic.pmids.iter().collect();
        let mut entry = TopicIngest {
            topic_id: topic.id.clone(),
            candidates: topic.pmids.len(),
            ..Default::default()
        };
        for pmid in &topic.pmids {
            match store.get(pmid) {
                Some(doc) if doc.abstract_text.is_empty() => entry.empty_abstracts += 1,
                Some(_) => {}
                None => entry.missing_documents.push(pmid.clone()),
            }
        }
        for (pmid, grade) in qrels.judgements(&topic.id) {
            if !candidates.contains(pmid) {
                entry.judged_outside_candidates.push(pmid.clone());
            } else if grade > 0 {
                entry.relevant += 1;
            }
        }
        report.topics.push(entry);
    }
    report.qrels_only_topics = qrels
        .topic_ids()
        .filter(|id| topics.get(id).is_none())
        .map(str::to_owned)
        .collect();
    report
}
