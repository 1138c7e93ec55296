use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::Pmid;

/// A PubMed document as seen by the rankers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocRecord {
    pub pmid: Pmid,
    pub title: String,
    #[serde(rename = "abstract", default)]
    pub abstract_text: String,
}

impl DocRecord {
    /// Returns `None` when the pmid or title is empty.
    pub fn new(pmid: &str, title: &str, abstract_text: &str) -> Option<Self> {
        (!pmid.trim().is_empty() && !title.trim().is_empty()).then(|| DocRecord {
            pmid: Pmid::from(pmid.trim()),
            title: title.to_owned(),
            abstract_text: abstract_text.to_owned(),
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct DocStore {
    docs: HashMap<Pmid, DocRecord>,
}

impl DocStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts `doc`, returning the record it replaced.
    pub fn insert(&mut self, doc: DocRecord) -> Option<DocRecord> {
        self.docs.insert(doc.pmid.clone(), doc)
    }

    pub fn get(&self, pmid: &Pmid) -> Option<&DocRecord> {
        self.docs.get(pmid)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Records in ascending pmid order.
    pub fn sorted(&self) -> Vec<&DocRecord> {
        let mut docs: Vec<&DocRecord> = self.docs.values().collect();
        docs.sort_by(|a, b| a.pmid.cmp(&b.pmid));
        docs
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CorpusLoadReport {
    pub records: usize,
    /// Pmids seen more than once; the last record won.
    pub duplicates: Vec<Pmid>,
    pub missing_abstracts: usize,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawId {
    Text(String),
    Number(u64),
}

#[derive(Deserialize)]
struct RawRecord {
    pmid: RawId,
    #[serde(default)]
    title: Option<String>,
    #[serde(rename = "abstract", default)]
    abstract_text: Option<String>,
}

/// Loads line-delimited JSON records `{"pmid", "title", "abstract"}`.
pub fn load_corpus<R: BufRead>(reader: R) -> Result<(DocStore, CorpusLoadReport), CorpusError> {
    let mut store = DocStore::new();
    let mut report = CorpusLoadReport::default();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line)
            .map_err(|e| CorpusError::parse(lineno, format!("malformed record: {e}")))?;
        let pmid = match raw.pmid {
            RawId::Text(s) => s,
            RawId::Number(n) => n.to_string(),
        };
        let abstract_text = raw.abstract_text.unwrap_or_default();
        let title = raw.title.unwrap_or_default();
        let doc = DocRecord::new(&pmid, &title, &abstract_text).ok_or_else(|| {
            CorpusError::parse(lineno, format!("record `{pmid}` has no pmid or no title"))
        })?;
        if doc.abstract_text.is_empty() {
            report.missing_abstracts += 1;
        }
        if let Some(old) = store.insert(doc) {
            log::warn!("corpus line {lineno}: duplicate pmid {}, keeping the later record", old.pmid);
            if old.abstract_text.is_empty() {
                report.missing_abstracts -= 1;
            }
            report.duplicates.push(old.pmid);
        }
    }
    report.records = store.len();
    Ok((store, report))
}

/// Writes records as line-delimited JSON, one per line, in the given order.
pub fn write_corpus<'a, W: Write>(
    docs: impl IntoIterator<Item = &'a DocRecord>,
    mut out: W,
) -> std::io::Result<()> {
    for doc in docs {
        serde_json::to_writer(&mut out, doc)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
