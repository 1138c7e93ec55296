use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use super::CorpusError;
use crate::Pmid;

/// Abstract-level relevance judgements, `(topic, pmid) -> grade`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    judgements: BTreeMap<String, BTreeMap<Pmid, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a judgement; returns `false` if the pair was already judged.
    pub fn insert(&mut self, topic: &str, pmid: Pmid, grade: u32) -> bool {
        let per_topic = self.judgements.entry(topic.to_owned()).or_default();
        if per_topic.contains_key(&pmid) {
            return false;
        }
        per_topic.insert(pmid, grade);
        true
    }

    pub fn grade(&self, topic: &str, pmid: &Pmid) -> Option<u32> {
        self.judgements.get(topic)?.get(pmid).copied()
    }

    /// Grades above zero count as relevant.
    pub fn is_relevant(&self, topic: &str, pmid: &Pmid) -> bool {
        self.grade(topic, pmid).is_some_and(|g| g > 0)
    }

    pub fn judgements<'a>(&'a self, topic: &str) -> impl Iterator<Item = (&'a Pmid, u32)> + 'a {
        self.judgements
            .get(topic)
            .into_iter()
            .flat_map(|m| m.iter().map(|(p, &g)| (p, g)))
    }

    pub fn topic_ids(&self) -> impl Iterator<Item = &str> {
        self.judgements.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.judgements.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Parses 4-column `topic iteration pmid grade` lines. The iteration column
/// is ignored.
pub fn parse_qrels<R: BufRead>(reader: R) -> Result<Qrels, CorpusError> {
    let mut qrels = Qrels::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            continue;
        }
        let [topic, _iteration, pmid, grade] = cols[..] else {
            return Err(CorpusError::parse(
                lineno,
                format!("expected 4 columns, found {}", cols.len()),
            ));
        };
        let grade: u32 = grade.parse().map_err(|_| {
            CorpusError::parse(lineno, format!("grade `{grade}` is not a non-negative integer"))
        })?;
        let pmid = Pmid::from(pmid);
        if !qrels.insert(topic, pmid.clone(), grade) {
            return Err(CorpusError::DuplicateJudgement {
                line: lineno,
                topic: topic.to_owned(),
                pmid,
            });
        }
    }
    Ok(qrels)
}

pub fn write_qrels<W: Write>(qrels: &Qrels, mut out: W) -> std::io::Result<()> {
    for (topic, docs) in &qrels.judgements {
        for (pmid, grade) in docs {
            writeln!(out, "{topic} 0 {pmid} {grade}")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reads_grades() {
        let q = parse_qrels("CD1 0 111 1\nCD1 0 222 0\n".as_bytes()).unwrap();
        assert_eq!(q.grade("CD1", &"111".into()), Some(1));
        assert_eq!(q.grade("CD1", &"222".into()), Some(0));
        assert!(!q.is_relevant("CD1", &"222".into()));
        assert_eq!(q.grade("CD1", &"333".into()), None);
    }

    #[test]
    fn duplicate_pair_is_error() {
        let err = parse_qrels("CD1 0 111 1\nCD1 1 111 0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateJudgement { line: 2, .. }));
    }

    #[test]
    fn bad_grade_is_error() {
        for bad in ["CD1 0 111 x\n", "CD1 0 111 -1\n", "CD1 0 111 1.5\n", "CD1 0 111\n"] {
            assert!(matches!(
                parse_qrels(bad.as_bytes()),
                Err(CorpusError::Parse { line: 1, .. })
            ));
        }
    }

    proptest! {
        #[test]
        fn write_parse_identity(
            entries in proptest::collection::btree_map(
                ("T[0-9]", 1u32..100000), 0u32..3, 0..40)
        ) {
            let mut q = Qrels::new();
            for ((topic, pmid), grade) in &entries {
                q.insert(topic, Pmid::new(pmid.to_string()), *grade);
            }
            let mut buf = Vec::new();
            write_qrels(&q, &mut buf).unwrap();
            prop_assert_eq!(parse_qrels(buf.as_slice()).unwrap(), q);
        }
    }
}
