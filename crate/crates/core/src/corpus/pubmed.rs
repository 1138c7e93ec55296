//! Batched client for the E-utilities `efetch` endpoint.
//!
//! Transport is abstracted behind [`EfetchTransport`] so the batching,
//! retry and XML handling can be exercised without a network.

use std::collections::HashSet;
use std::thread;
use std::time::Duration;

use thiserror::Error;

use super::DocRecord;
use crate::Pmid;

pub const DEFAULT_ENDPOINT: &str = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils/efetch.fcgi";

#[derive(Debug, Error)]
#[error("{message}")]
pub struct TransportError {
    pub message: String,
}

impl TransportError {
    pub fn new(message: impl Into<String>) -> Self {
        TransportError {
            message: message.into(),
        }
    }
}

/// Fetches the raw `PubmedArticleSet` XML for one batch of identifiers.
pub trait EfetchTransport {
    fn fetch(&self, pmids: &[Pmid]) -> Result<String, TransportError>;
}

impl<T: EfetchTransport + ?Sized> EfetchTransport for &T {
    fn fetch(&self, pmids: &[Pmid]) -> Result<String, TransportError> {
        (**self).fetch(pmids)
    }
}

#[derive(Debug, Clone)]
pub struct FetchOptions {
    pub batch_size: usize,
    /// Retries after the first failed attempt of a batch.
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl Default for FetchOptions {
    fn default() -> Self {
        FetchOptions {
            batch_size: 200,
            max_retries: 4,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(8),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FetchOutcome {
    pub records: Vec<DocRecord>,
    /// Requested pmids the service did not return.
    pub missing: Vec<Pmid>,
    /// Returned articles without a title; they cannot become records.
    pub untitled: Vec<Pmid>,
}

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("batch size must be at least 1")]
    InvalidBatchSize,
    #[error("malformed efetch response: {0}")]
    Xml(String),
    #[error("{} pmids could not be fetched: {}", .unfetched.len(), join(.unfetched))]
    Incomplete {
        unfetched: Vec<Pmid>,
        last_error: String,
        partial: FetchOutcome,
    },
}

fn join(pmids: &[Pmid]) -> String {
    pmids.iter().map(Pmid::as_str).collect::<Vec<_>>().join(",")
}

/// Builds the GET url for one batch.
pub fn efetch_url(endpoint: &str, pmids: &[Pmid], api_key: Option<&str>) -> String {
    let mut url = format!(
        "{endpoint}?db=pubmed&retmode=xml&rettype=abstract&id={}",
        join(pmids)
    );
    if let Some(key) = api_key.filter(|k| !k.is_empty()) {
        url.push_str("&api_key=");
        url.push_str(key);
    }
    url
}

/// One article parsed from an efetch response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedArticle {
    pub pmid: Pmid,
    pub title: String,
    pub abstract_text: String,
}

/// Extracts pmid, title and abstract from a `PubmedArticleSet` document.
/// Structured abstracts have their sections joined with a single space.
pub fn parse_efetch_xml(xml: &str) -> Result<Vec<ParsedArticle>, FetchError> {
    let options = roxmltree::ParsingOptions {
        allow_dtd: true,
        ..Default::default()
    };
    let doc = roxmltree::Document::parse_with_options(xml, options)
        .map_err(|e| FetchError::Xml(e.to_string()))?;
    let mut articles = Vec::new();
    for article in doc
        .descendants()
        .filter(|n| n.has_tag_name("PubmedArticle"))
    {
        let Some(citation) = child(article, "MedlineCitation") else {
            continue;
        };
        let Some(pmid) = child(citation, "PMID").map(text_of) else {
            continue;
        };
        let body = child(citation, "Article");
        let title = body
            .and_then(|a| child(a, "ArticleTitle"))
            .map(text_of)
            .unwrap_or_default();
        let abstract_text = body
            .and_then(|a| child(a, "Abstract"))
            .map(|abs| {
                abs.children()
                    .filter(|n| n.has_tag_name("AbstractText"))
                    .map(text_of)
                    .filter(|s| !s.is_empty())
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .unwrap_or_default();
        articles.push(ParsedArticle {
            pmid: Pmid::new(pmid),
            title,
            abstract_text,
        });
    }
    Ok(articles)
}

fn child<'a, 'i>(node: roxmltree::Node<'a, 'i>, name: &str) -> Option<roxmltree::Node<'a, 'i>> {
    node.children().find(|n| n.has_tag_name(name))
}

/// All descendant text (inline markup such as `<i>` flattened), trimmed.
fn text_of(node: roxmltree::Node) -> String {
    let text: String = node
        .descendants()
        .filter(|n| n.is_text())
        .filter_map(|n| n.text())
        .collect();
    text.trim().to_owned()
}

/// Fetches `pmids` in batches, retrying failed batches with exponential
/// backoff. Batches that still fail are listed in [`FetchError::Incomplete`]
/// together with everything that was fetched.
pub fn fetch_pubmed<T: EfetchTransport>(
    transport: T,
    pmids: &[Pmid],
    options: &FetchOptions,
) -> Result<FetchOutcome, FetchError> {
    if options.batch_size == 0 {
        return Err(FetchError::InvalidBatchSize);
    }
    let mut outcome = FetchOutcome::default();
    let mut unfetched = Vec::new();
    let mut last_error = String::new();

    for batch in pmids.chunks(options.batch_size) {
        let xml = match fetch_with_retry(&transport, batch, options) {
            Ok(xml) => xml,
            Err(e) => {
                log::warn!("giving up on batch of {} pmids: {e}", batch.len());
                last_error = e.message;
                unfetched.extend_from_slice(batch);
                continue;
            }
        };
        let articles = match parse_efetch_xml(&xml) {
            Ok(articles) => articles,
            Err(e) => {
                last_error = e.to_string();
                unfetched.extend_from_slice(batch);
                continue;
            }
        };
        let requested: HashSet<&Pmid> = batch.iter().collect();
        let mut returned = HashSet::new();
        for article in articles {
            if !requested.contains(&article.pmid) || !returned.insert(article.pmid.clone()) {
                continue;
            }
            match DocRecord::new(article.pmid.as_str(), &article.title, &article.abstract_text) {
                Some(doc) => outcome.records.push(doc),
                None => outcome.untitled.push(article.pmid),
            }
        }
        outcome
            .missing
            .extend(batch.iter().filter(|p| !returned.contains(*p)).cloned());
    }

    if unfetched.is_empty() {
        Ok(outcome)
    } else {
        Err(FetchError::Incomplete {
            unfetched,
            last_error,
            partial: outcome,
        })
    }
}

fn fetch_with_retry<T: EfetchTransport>(
    transport: &T,
    batch: &[Pmid],
    options: &FetchOptions,
) -> Result<String, TransportError> {
    let mut delay = options.initial_backoff;
    let mut attempt = 0;
    loop {
        match transport.fetch(batch) {
            Ok(body) => return Ok(body),
            Err(e) if attempt >= options.max_retries => return Err(e),
            Err(e) => {
                log::debug!("efetch attempt {} failed: {e}; retrying in {delay:?}", attempt + 1);
                thread::sleep(delay);
                delay = (delay * 2).min(options.max_backoff);
                attempt += 1;
            }
        }
    }
}
