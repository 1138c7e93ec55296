//! Screening prioritisation for medical systematic reviews.
//!
//! The crate covers the whole evaluation loop for ranking the candidate set
//! retrieved by a review's Boolean query:
//!
//! * [`corpus`]: topic, qrels and document-store ingestion, the PubMed
//!   fetch client and Title/TiAb document representations.
//! * [`lexical`]: BM25 and Jelinek-Mercer query likelihood rankers.
//! * [`runio`]: run file reading, writing and validation.
//! * [`metrics`]: the CLEF TAR measures (Last_Rel, AP, Recall@p%, WSS@k).
//! * [`analysis`]: paired t-tests with Bonferroni correction, per-topic
//!   gain/loss and checkpoint convergence.

pub mod analysis;
pub mod corpus;
pub mod lexical;
pub mod metrics;
pub mod runio;

mod pmid;

pub use analysis::{
    compare_runs, convergence, gain_loss, paired_ttest, Convergence, ConvergencePoint, GainLoss,
    GainLossEntry, PairedComparison, RunComparison, Saturation,
};
pub use corpus::{
    load_corpus, parse_qrels, parse_topics, represent, DocRecord, DocRepresentation, DocStore,
    Qrels, ReprMode, Topic, TopicSet, SEPARATOR,
};
pub use lexical::{rank_topic, rank_topics, tokenize, CollectionStats, LexicalParams, Model};
pub use metrics::{evaluate, EvalOptions, Measure, MetricReport, TopicEval};
pub use pmid::Pmid;
pub use runio::{read_run, validate_against, write_run, RankedRun, RunEntry, RunFlag};
