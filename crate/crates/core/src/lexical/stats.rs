use std::collections::HashMap;

use super::TokenStream;
use crate::Pmid;

#[derive(Debug, Clone, Default)]
pub(crate) struct DocTerms {
    pub(crate) len: usize,
    pub(crate) tf: HashMap<String, usize>,
}

/// Term statistics over one topic's candidate collection.
#[derive(Debug, Clone, Default)]
pub struct CollectionStats {
    docs: HashMap<Pmid, DocTerms>,
    avg_doc_len: f64,
    df: HashMap<String, usize>,
    cf: HashMap<String, usize>,
    total_tokens: usize,
    mean_positive_idf: f64,
}

impl CollectionStats {
    /// Builds statistics from already-tokenized documents. A repeated pmid
    /// replaces the earlier document.
    pub fn from_tokens<I>(docs: I) -> Self
    where
        I: IntoIterator<Item = (Pmid, TokenStream)>,
    {
        let mut by_pmid: HashMap<Pmid, DocTerms> = HashMap::new();
        for (pmid, tokens) in docs {
            let mut terms = DocTerms {
                len: tokens.len(),
                tf: HashMap::new(),
            };
            for token in &tokens {
                *terms.tf.entry(token.clone()).or_default() += 1;
            }
            by_pmid.insert(pmid, terms);
        }

        let mut df: HashMap<String, usize> = HashMap::new();
        let mut cf: HashMap<String, usize> = HashMap::new();
        let mut total_tokens = 0;
        for terms in by_pmid.values() {
            total_tokens += terms.len;
            for (term, &count) in &terms.tf {
                *df.entry(term.clone()).or_default() += 1;
                *cf.entry(term.clone()).or_default() += count;
            }
        }
        let n_docs = by_pmid.len();
        let avg_doc_len = if n_docs == 0 {
            0.0
        } else {
            total_tokens as f64 / n_docs as f64
        };

        let mut stats = CollectionStats {
            docs: by_pmid,
            avg_doc_len,
            df,
            cf,
            total_tokens,
            mean_positive_idf: 0.0,
        };
        // summed in sorted term order
        let mut positive: Vec<(&String, f64)> = stats
            .df
            .keys()
            .map(|t| (t, stats.raw_idf_for_df(stats.df[t])))
            .filter(|&(_, idf)| idf > 0.0)
            .collect();
        positive.sort_by(|a, b| a.0.cmp(b.0));
        if !positive.is_empty() {
            stats.mean_positive_idf =
                positive.iter().map(|&(_, idf)| idf).sum::<f64>() / positive.len() as f64;
        }
        stats
    }

    pub fn n_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn total_tokens(&self) -> usize {
        self.total_tokens
    }

    pub fn doc_len(&self, pmid: &Pmid) -> Option<usize> {
        self.docs.get(pmid).map(|d| d.len)
    }

    pub fn tf(&self, pmid: &Pmid, term: &str) -> usize {
        self.docs
            .get(pmid)
            .and_then(|d| d.tf.get(term).copied())
            .unwrap_or(0)
    }

    pub fn df(&self, term: &str) -> usize {
        self.df.get(term).copied().unwrap_or(0)
    }

    pub fn cf(&self, term: &str) -> usize {
        self.cf.get(term).copied().unwrap_or(0)
    }

    pub fn vocabulary_size(&self) -> usize {
        self.df.len()
    }

    /// Mean of the strictly positive BM25 idf values over the vocabulary,
    /// or 0 when no term has a positive idf.
    pub fn mean_positive_idf(&self) -> f64 {
        self.mean_positive_idf
    }

    pub(crate) fn doc(&self, pmid: &Pmid) -> Option<&DocTerms> {
        self.docs.get(pmid)
    }

    /// `ln((N - df + 0.5) / (df + 0.5))`, unfloored.
    pub fn raw_idf(&self, term: &str) -> Option<f64> {
        self.df.get(term).map(|&df| self.raw_idf_for_df(df))
    }

    fn raw_idf_for_df(&self, df: usize) -> f64 {
        let n = self.n_docs() as f64;
        let df = df as f64;
        ((n - df + 0.5) / (df + 0.5)).ln()
    }
}
