//! Run files: `topic flag pmid rank score tag`, one line per ranked document.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{Qrels, TopicSet};
use crate::Pmid;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("run line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("run line {line}: ({topic}, {pmid}) ranked twice")]
    Duplicate {
        line: usize,
        topic: String,
        pmid: Pmid,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The second column. CLEF TAR runs use `NF`/`AF` (no feedback / active
/// feedback); TREC runs use `Q0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
pub enum RunFlag {
    Q0,
    #[default]
    NF,
    AF,
}

impl FromStr for RunFlag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Q0" => Ok(RunFlag::Q0),
            "NF" => Ok(RunFlag::NF),
            "AF" => Ok(RunFlag::AF),
            other => Err(format!("unknown flag `{other}` (expected Q0, NF or AF)")),
        }
    }
}

impl fmt::Display for RunFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunFlag::Q0 => "Q0",
            RunFlag::NF => "NF",
            RunFlag::AF => "AF",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunEntry {
    pub pmid: Pmid,
    pub rank: usize,
    pub score: f64,
}

impl RunEntry {
    /// Sorts by score descending then pmid ascending and assigns ranks 1..n.
    pub fn ranked(mut scored: Vec<(Pmid, f64)>) -> Vec<RunEntry> {
        // -0.0 and 0.0 must tie
        scored.iter_mut().for_each(|(_, s)| *s += 0.0);
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored
            .into_iter()
            .enumerate()
            .map(|(i, (pmid, score))| RunEntry {
                pmid,
                rank: i + 1,
                score,
            })
            .collect()
    }
}

/// A ranked run in normal form: within each topic ranks are `1..n`, pmids
/// are unique and scores do not increase with rank.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankedRun {
    tag: String,
    flag: RunFlag,
    topics: BTreeMap<String, Vec<RunEntry>>,
}

impl RankedRun {
    /// Builds a run from per-topic scores. Pmids must be unique per topic.
    pub fn from_scores(
        tag: impl Into<String>,
        scores: BTreeMap<String, Vec<(Pmid, f64)>>,
    ) -> Self {
        let topics = scores
            .into_iter()
            .map(|(topic, scored)| {
                debug_assert!(
                    scored.iter().map(|(p, _)| p).collect::<HashSet<_>>().len() == scored.len()
                );
                (topic, RunEntry::ranked(scored))
            })
            .collect();
        RankedRun {
            tag: tag.into(),
            flag: RunFlag::NF,
            topics,
        }
    }

    /// Re-normalizes already ranked entries.
    pub fn from_ranked(tag: impl Into<String>, topics: BTreeMap<String, Vec<RunEntry>>) -> Self {
        let scores = topics
            .into_iter()
            .map(|(t, entries)| (t, entries.into_iter().map(|e| (e.pmid, e.score)).collect()))
            .collect();
        Self::from_scores(tag, scores)
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn set_tag(&mut self, tag: impl Into<String>) {
        self.tag = tag.into();
    }

    /// Flag found in the source file (`NF` for runs built in memory).
    pub fn flag(&self) -> RunFlag {
        self.flag
    }

    pub fn topic(&self, topic_id: &str) -> Option<&[RunEntry]> {
        self.topics.get(topic_id).map(Vec::as_slice)
    }

    /// Topics in ascending id order.
    pub fn topics(&self) -> impl Iterator<Item = (&str, &[RunEntry])> {
        self.topics.iter().map(|(t, e)| (t.as_str(), e.as_slice()))
    }

    pub fn topic_count(&self) -> usize {
        self.topics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topics.is_empty()
    }
}

/// Reads a 6-column run. Entries are re-sorted by (score desc, pmid asc)
/// and ranks rewritten; the input rank column only has to be numeric.
pub fn read_run<R: BufRead>(reader: R) -> Result<RankedRun, RunError> {
    let mut tag: Option<String> = None;
    let mut flag: Option<RunFlag> = None;
    let mut scores: BTreeMap<String, Vec<(Pmid, f64)>> = BTreeMap::new();
    let mut seen: HashSet<(String, Pmid)> = HashSet::new();

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            continue;
        }
        let parse_err = |message: String| RunError::Parse {
            line: lineno,
            message,
        };
        let [topic, line_flag, pmid, rank, score, line_tag] = cols[..] else {
            return Err(parse_err(format!("expected 6 columns, found {}", cols.len())));
        };
        let line_flag: RunFlag = line_flag.parse().map_err(parse_err)?;
        rank.parse::<u64>()
            .map_err(|_| parse_err(format!("rank `{rank}` is not a non-negative integer")))?;
        let score: f64 = score
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| parse_err(format!("score `{score}` is not a finite number")))?;

        match &tag {
            None => tag = Some(line_tag.to_owned()),
            Some(t) if t != line_tag => {
                log::warn!("run line {lineno}: tag `{line_tag}` differs from `{t}`; keeping `{t}`")
            }
            Some(_) => {}
        }
        flag.get_or_insert(line_flag);

        let pmid = Pmid::from(pmid);
        if !seen.insert((topic.to_owned(), pmid.clone())) {
            return Err(RunError::Duplicate {
                line: lineno,
                topic: topic.to_owned(),
                pmid,
            });
        }
        scores.entry(topic.to_owned()).or_default().push((pmid, score));
    }

    let mut run = RankedRun::from_scores(tag.unwrap_or_default(), scores);
    run.flag = flag.unwrap_or_default();
    Ok(run)
}

/// Writes the run with flag `NF` and scores to 6 decimal places.
///
/// Entries are ordered (and ranks assigned) by the printed score, ties by
/// ascending pmid.
pub fn write_run<W: Write>(run: &RankedRun, mut out: W) -> std::io::Result<()> {
    for (topic, entries) in &run.topics {
        let mut printed: Vec<(f64, String, &Pmid)> = entries
            .iter()
            .map(|e| {
                let text = format!("{:.6}", e.score);
                (text.parse().expect("formatted float parses"), text, &e.pmid)
            })
            .collect();
        printed.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .expect("scores are finite")
                .then_with(|| a.2.cmp(b.2))
        });
        for (i, (_, score, pmid)) in printed.iter().enumerate() {
            writeln!(out, "{topic} NF {pmid} {} {score} {}", i + 1, run.tag)?;
        }
    }
    Ok(())
}

pub fn run_to_string(run: &RankedRun) -> String {
    let mut buf = Vec::new();
    write_run(run, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("run output is UTF-8")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TopicGaps {
    pub topic_id: String,
    /// Candidates the run does not rank.
    pub missing_candidates: Vec<Pmid>,
    /// Ranked pmids outside the candidate set.
    pub foreign_documents: Vec<Pmid>,
    /// Relevant candidates the run does not rank.
    pub unranked_relevant: Vec<Pmid>,
}

impl TopicGaps {
    pub fn is_empty(&self) -> bool {
        self.missing_candidates.is_empty()
            && self.foreign_documents.is_empty()
            && self.unranked_relevant.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConsistencyReport {
    /// Only topics with at least one gap.
    pub topics: Vec<TopicGaps>,
    /// Topics with no entries in the run.
    pub absent_topics: Vec<String>,
    /// Run topics that are not in the topic set.
    pub unknown_topics: Vec<String>,
}

impl ConsistencyReport {
    /// True iff every topic is ranked with exactly its candidate set.
    pub fn is_complete(&self) -> bool {
        self.topics.is_empty() && self.absent_topics.is_empty() && self.unknown_topics.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.is_complete()
    }
}

impl fmt::Display for ConsistencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_complete() {
            return writeln!(f, "run is complete");
        }
        let list = |ids: &[Pmid]| ids.iter().map(Pmid::as_str).collect::<Vec<_>>().join(" ");
        for t in &self.topics {
            writeln!(f, "topic {}:", t.topic_id)?;
            if !t.missing_candidates.is_empty() {
                writeln!(f, "  missing candidates ({}): {}", t.missing_candidates.len(), list(&t.missing_candidates))?;
            }
            if !t.foreign_documents.is_empty() {
                writeln!(f, "  foreign documents ({}): {}", t.foreign_documents.len(), list(&t.foreign_documents))?;
            }
            if !t.unranked_relevant.is_empty() {
                writeln!(f, "  unranked relevant ({}): {}", t.unranked_relevant.len(), list(&t.unranked_relevant))?;
            }
        }
        if !self.absent_topics.is_empty() {
            writeln!(f, "topics absent from run: {}", self.absent_topics.join(" "))?;
        }
        if !self.unknown_topics.is_empty() {
            writeln!(f, "unknown topics in run: {}", self.unknown_topics.join(" "))?;
        }
        Ok(())
    }
}

/// Compares the run against each topic's candidate set.
pub fn validate_against(run: &RankedRun, topics: &TopicSet, qrels: &Qrels) -> ConsistencyReport {
    let mut report = ConsistencyReport::default();
    for topic in topics {
        let Some(entries) = run.topic(&topic.id) else {
            report.absent_topics.push(topic.id.clone());
            continue;
        };
        let ranked: BTreeSet<&Pmid> = entries.iter().map(|e| &e.pmid).collect();
        let candidates: BTreeSet<&Pmid> = topic.pmids.iter().collect();
        let mut gaps = TopicGaps {
            topic_id: topic.id.clone(),
            missing_candidates: candidates.difference(&ranked).map(|&p| p.clone()).collect(),
            foreign_documents: ranked.difference(&candidates).map(|&p| p.clone()).collect(),
            ..Default::default()
        };
        gaps.unranked_relevant = gaps
            .missing_candidates
            .iter()
            .filter(|p| qrels.is_relevant(&topic.id, p))
            .cloned()
            .collect();
        if !gaps.is_empty() {
            report.topics.push(gaps);
        }
    }
    report.unknown_topics = run
        .topics()
        .map(|(id, _)| id)
        .filter(|id| topics.get(id).is_none())
        .map(str::to_owned)
        .collect();
    report
}
