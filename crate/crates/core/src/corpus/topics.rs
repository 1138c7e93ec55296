use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::Serialize;

use super::CorpusError;
use crate::Pmid;

/// One systematic review: its title is the ranking query and `pmids` is the
/// candidate set retrieved by the (opaque) Boolean query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Topic {
    pub id: String,
    pub title: String,
    pub boolean_query: String,
    pub pmids: Vec<Pmid>,
    /// Header lines other than `Topic/Title/Query/Pids`, kept verbatim.
    pub metadata: Vec<(String, String)>,
}

/// Topics in file order with lookup by id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TopicSet {
    topics: Vec<Topic>,
    index: HashMap<String, usize>,
}

impl TopicSet {
    pub fn new(topics: Vec<Topic>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(topics.len());
        for (i, topic) in topics.iter().enumerate() {
            if topic.pmids.is_empty() {
                return Err(CorpusError::NoCandidates(topic.id.clone()));
            }
            let mut seen = HashSet::with_capacity(topic.pmids.len());
            for pmid in &topic.pmids {
                if !seen.insert(pmid) {
                    return Err(CorpusError::DuplicateCandidate {
                        topic: topic.id.clone(),
                        pmid: pmid.clone(),
                    });
                }
            }
            if index.insert(topic.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateTopic(topic.id.clone()));
            }
        }
        Ok(TopicSet { topics, index })
    }

    pub fn get(&self, id: &str) -> Option<&Topic> {
        self.index.get(id).map(|&i| &self.topics[i])
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Topic> {
        self.topics.iter()
    }

    pub fn len(&self) -> usize {
        self.topics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topics.is_empty()
    }
}

impl<'a> IntoIterator for &'a TopicSet {
    type Item = &'a Topic;
    type IntoIter = std::slice::Iter<'a, Topic>;

    fn into_iter(self) -> Self::IntoIter {
        self.topics.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Start,
    Title,
    Query,
    Pids,
    Meta,
}

#[derive(Debug)]
struct Block {
    line: usize,
    id: String,
    title: Option<String>,
    query: Option<Vec<String>>,
    pids: Option<Vec<Pmid>>,
    metadata: Vec<(String, String)>,
    section: Section,
}

impl Block {
    fn new(line: usize, id: String) -> Self {
        Block {
            line,
            id,
            title: None,
            query: None,
            pids: None,
            metadata: Vec::new(),
            section: Section::Start,
        }
    }

    fn finish(self) -> Result<Topic, CorpusError> {
        let missing = |kw: &str| {
            CorpusError::parse(
                self.line,
                format!("topic `{}` is missing the `{kw}:` header", self.id),
            )
        };
        let title = self.title.clone().ok_or_else(|| missing("Title"))?;
        if title.is_empty() {
            return Err(CorpusError::parse(
                self.line,
                format!("topic `{}` has an empty title", self.id),
            ));
        }
        let query = self.query.as_ref().ok_or_else(|| missing("Query"))?;
        let pmids = self.pids.clone().ok_or_else(|| missing("Pids"))?;
        Ok(Topic {
            id: self.id,
            title,
            boolean_query: trim_blank_lines(query),
            pmids,
            metadata: self.metadata,
        })
    }
}

fn trim_blank_lines(lines: &[String]) -> String {
    let start = lines.iter().position(|l| !l.trim().is_empty());
    let end = lines.iter().rposition(|l| !l.trim().is_empty());
    match (start, end) {
        (Some(s), Some(e)) => lines[s..=e].join("\n"),
        _ => String::new(),
    }
}

const KNOWN: [&str; 4] = ["Topic", "Title", "Query", "Pids"];

/// Splits a `Key: value` header line. Headers start at column 0 and the key
/// is a short run of letters, digits, spaces, `_` or `-`.
fn header(line: &str) -> Option<(&str, &str)> {
    let colon = line.find(':')?;
    let key = &line[..colon];
    let first = key.chars().next()?;
    let key_ok = first.is_ascii_alphabetic()
        && key.len() <= 40
        && !key.ends_with(' ')
        && key
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, ' ' | '_' | '-'));
    key_ok.then(|| (key, line[colon + 1..].trim()))
}

/// Parses the keyword-block topic format:
///
/// ```text
/// Topic: CD007394
/// Title: Galactomannan detection for invasive aspergillosis
/// Query:
/// <Boolean query lines, kept verbatim>
/// Pids:
///     24514094
///     ...
/// ```
pub fn parse_topics<R: BufRead>(reader: R) -> Result<TopicSet, CorpusError> {
    let mut topics = Vec::new();
    let mut current: Option<Block> = None;

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);

        let head = header(line).filter(|(key, _)| {
            // Inside a query only the known keywords end the section.
            let in_query = current.as_ref().map(|b| b.section) == Some(Section::Query);
            !in_query || KNOWN.contains(key)
        });

        if let Some((key, value)) = head {
            if key == "Topic" {
                if value.is_empty() {
                    return Err(CorpusError::parse(lineno, "empty `Topic:` id"));
                }
                if let Some(block) = current.take() {
                    topics.push(block.finish()?);
                }
                current = Some(Block::new(lineno, value.to_owned()));
                continue;
            }
            let Some(block) = current.as_mut() else {
                return Err(CorpusError::parse(
                    lineno,
                    format!("`{key}:` appears before any `Topic:` header"),
                ));
            };
            let duplicate = |what: &str| {
                CorpusError::parse(lineno, format!("second `{what}:` header in topic `{}`", block.id))
            };
            match key {
                "Title" => {
                    if block.title.is_some() {
                        return Err(duplicate("Title"));
                    }
                    block.title = Some(value.to_owned());
                    block.section = Section::Title;
                }
                "Query" => {
                    if block.query.is_some() {
                        return Err(duplicate("Query"));
                    }
                    let mut lines = Vec::new();
                    if !value.is_empty() {
                        lines.push(value.to_owned());
                    }
                    block.query = Some(lines);
                    block.section = Section::Query;
                }
                "Pids" => {
                    if block.pids.is_some() {
                        return Err(duplicate("Pids"));
                    }
                    block.pids = Some(value.split_whitespace().map(Pmid::from).collect());
                    block.section = Section::Pids;
                }
                _ => {
                    block.metadata.push((key.to_owned(), value.to_owned()));
                    block.section = Section::Meta;
                }
            }
            continue;
        }

        let Some(block) = current.as_mut() else {
            if line.trim().is_empty() {
                continue;
            }
            return Err(CorpusError::parse(lineno, "expected a `Topic:` header"));
        };
        match block.section {
            Section::Query => block.query.get_or_insert_with(Vec::new).push(line.to_owned()),
            _ if line.trim().is_empty() => {}
            Section::Title => append_words(block.title.get_or_insert_with(String::new), line),
            Section::Meta => {
                if let Some((_, value)) = block.metadata.last_mut() {
                    append_words(value, line);
                }
            }
            Section::Pids => {
                let pids = block.pids.get_or_insert_with(Vec::new);
                pids.extend(line.split_whitespace().map(Pmid::from));
            }
            Section::Start => {
                return Err(CorpusError::parse(
                    lineno,
                    format!("unexpected text in topic `{}` before any header", block.id),
                ));
            }
        }
    }
    if let Some(block) = current {
        topics.push(block.finish()?);
    }
    TopicSet::new(topics)
}

fn append_words(target: &mut String, line: &str) {
    if !target.is_empty() {
        target.push(' ');
    }
    target.push_str(line.trim());
}

pub fn write_topics<W: Write>(topics: &TopicSet, mut out: W) -> std::io::Result<()> {
    for topic in topics {
        writeln!(out, "Topic: {}\n", topic.id)?;
        writeln!(out, "Title: {}\n", topic.title)?;
        for (key, value) in &topic.metadata {
            writeln!(out, "{key}: {value}\n")?;
        }
        writeln!(out, "Query:")?;
        if !topic.boolean_query.is_empty() {
            writeln!(out, "{}", topic.boolean_query)?;
        }
        writeln!(out, "\nPids:")?;
        for pmid in &topic.pmids {
            writeln!(out, "    {pmid}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
Topic: CD008686

Title: Thromboelastography for bleeding in cardiac surgery

Query:
1. exp Thrombelastography/
2. (thromboelastogra* or rotem).ti,ab.
3. or/1-2

Pids:
    111
    222
    333

Topic: CD010000
Title: Another review
Type: DTA
Query:
\"heart\"[Mesh] AND attack
Pids:
  5
";

    #[test]
    fn parses_blocks() {
        let set = parse_topics(SAMPLE.as_bytes()).unwrap();
        assert_eq!(set.len(), 2);
        let t = set.get("CD008686").unwrap();
        assert_eq!(t.pmids.len(), 3);
        assert_eq!(t.pmids[0], Pmid::from("111"));
        assert_eq!(
            t.boolean_query,
            "1. exp Thrombelastography/\n2. (thromboelastogra* or rotem).ti,ab.\n3. or/1-2"
        );
        let t2 = set.get("CD010000").unwrap();
        assert_eq!(t2.metadata, vec![("Type".to_owned(), "DTA".to_owned())]);
        assert_eq!(t2.title, "Another review");
    }

    #[test]
    fn empty_pids_section() {
        let err = parse_topics("Topic: A\nTitle: t\nQuery:\nq\nPids:\n\n".as_bytes()).unwrap_err();
        assert!(matches!(err, CorpusError::NoCandidates(ref id) if id == "A"));
        assert_eq!(err.to_string(), "topic `A` has no candidates");
    }

    #[test]
    fn duplicate_topic_id() {
        let text = "Topic: A\nTitle: t\nQuery:\nPids:\n1\nTopic: A\nTitle: u\nQuery:\nPids:\n2\n";
        let err = parse_topics(text.as_bytes()).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateTopic(ref id) if id == "A"));
    }

    #[test]
    fn missing_keyword_names_line() {
        let err = parse_topics("\n\nTopic: A\nQuery:\nq\nPids:\n1\n".as_bytes()).unwrap_err();
        match err {
            CorpusError::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("Title"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_topics("stray\nTopic: A\n".as_bytes()).unwrap_err();
        assert!(matches!(err, CorpusError::Parse { line: 1, .. }));
    }

    #[test]
    fn duplicate_candidate_rejected() {
        let err = parse_topics("Topic: A\nTitle: t\nQuery:\nPids:\n1\n1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateCandidate { .. }));
    }

    #[test]
    fn write_then_parse() {
        let set = parse_topics(SAMPLE.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_topics(&set, &mut buf).unwrap();
        let again = parse_topics(buf.as_slice()).unwrap();
        assert_eq!(set, again);
    }
}
