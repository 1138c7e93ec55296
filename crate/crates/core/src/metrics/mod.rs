//! CLEF TAR evaluation measures and run evaluation.

mod measures;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::corpus::{Qrels, Topic, TopicSet};
use crate::runio::{validate_against, ConsistencyReport, RankedRun};
use crate::Pmid;

pub use measures::{average_precision, last_rel, recall_at_percent, wss, MetricError};

/// One evaluation measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Measure {
    LastRel,
    Ap,
    /// Recall at the top `p%` of the ranking.
    Recall(u32),
    /// Work saved over sampling at `k%` recall.
    Wss(u32),
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Measure::LastRel => f.write_str("last_rel"),
            Measure::Ap => f.write_str("ap"),
            Measure::Recall(p) => write!(f, "recall@{p}"),
            Measure::Wss(k) => write!(f, "wss@{k}"),
        }
    }
}

impl FromStr for Measure {
    type Err = String;

    /// Accepts `last_rel`, `ap`, `recall@10` (or `recall@10%`), `wss@95`
    /// (or `wss95`), case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let percent = |rest: &str| -> Result<u32, String> {
            let rest = rest.trim_start_matches('@').trim_end_matches('%');
            match rest.parse::<u32>() {
                Ok(p) if (1..=100).contains(&p) => Ok(p),
                _ => Err(format!("bad percentage in measure `{s}`")),
            }
        };
        match lower.as_str() {
            "last_rel" | "lastrel" => Ok(Measure::LastRel),
            "ap" | "map" => Ok(Measure::Ap),
            m if m.starts_with("recall") => percent(&m["recall".len()..]).map(Measure::Recall),
            m if m.starts_with("wss") => percent(&m["wss".len()..]).map(Measure::Wss),
            _ => Err(format!("unknown measure `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Completion {
    /// Unranked candidates are appended after the run in pmid order and
    /// foreign documents are dropped.
    #[default]
    Append,
    /// Any gap between the run and the candidate sets is an error.
    Strict,
}

impl FromStr for Completion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "append" => Ok(Completion::Append),
            "strict" => Ok(Completion::Strict),
            other => Err(format!("unknown completion mode `{other}` (expected append or strict)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub recall_percents: Vec<u32>,
    pub wss_percents: Vec<u32>,
    pub completion: Completion,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            recall_percents: vec![1, 5, 10, 20],
            wss_percents: vec![95, 100],
            completion: Completion::Append,
        }
    }
}

impl EvalOptions {
    /// Measures in report column order.
    pub fn measures(&self) -> Vec<Measure> {
        let mut out = vec![Measure::LastRel, Measure::Ap];
        out.extend(self.recall_percents.iter().map(|&p| Measure::Recall(p)));
        out.extend(self.wss_percents.iter().map(|&k| Measure::Wss(k)));
        out
    }
}

/// Measures for one evaluated topic.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicEval {
    pub topic_id: String,
    /// Candidate count.
    pub n: usize,
    /// Relevant candidates.
    pub r: usize,
    pub last_rel: usize,
    pub ap: f64,
    pub recall_at: BTreeMap<u32, f64>,
    pub wss: BTreeMap<u32, f64>,
}

impl TopicEval {
    /// Evaluates a complete ranking given as relevance flags.
    pub fn from_ranking(
        topic_id: &str,
        ranking: &[bool],
        options: &EvalOptions,
    ) -> Result<Self, MetricError> {
        let mut recall_at = BTreeMap::new();
        for &p in &options.recall_percents {
            recall_at.insert(p, recall_at_percent(ranking, p as f64)?);
        }
        let mut wss_at = BTreeMap::new();
        for &k in &options.wss_percents {
            wss_at.insert(k, wss(ranking, k as f64)?);
        }
        Ok(TopicEval {
            topic_id: topic_id.to_owned(),
            n: ranking.len(),
            r: ranking.iter().filter(|&&r| r).count(),
            last_rel: last_rel(ranking)?,
            ap: average_precision(ranking)?,
            recall_at,
            wss: wss_at,
        })
    }

    pub fn value(&self, measure: Measure) -> Option<f64> {
        match measure {
            Measure::LastRel => Some(self.last_rel as f64),
            Measure::Ap => Some(self.ap),
            Measure::Recall(p) => self.recall_at.get(&p).copied(),
            Measure::Wss(k) => self.wss.get(&k).copied(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    NoRelevant,
    NotInRun,
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExclusionReason::NoRelevant => "no relevant documents",
            ExclusionReason::NotInRun => "not ranked by the run",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcludedTopic {
    pub topic_id: String,
    pub reason: ExclusionReason,
}

/// Per-topic evaluation plus means over the evaluated topics.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub run_tag: String,
    pub measures: Vec<Measure>,
    /// Evaluated topics in ascending id order.
    pub topics: Vec<TopicEval>,
    pub excluded: Vec<ExcludedTopic>,
}

impl MetricReport {
    /// Arithmetic mean over the evaluated topics.
    pub fn mean(&self, measure: Measure) -> Option<f64> {
        if self.topics.is_empty() {
            return None;
        }
        let mut sum = 0.0;
        for t in &self.topics {
            sum += t.value(measure)?;
        }
        Some(sum / self.topics.len() as f64)
    }

    pub fn topic(&self, topic_id: &str) -> Option<&TopicEval> {
        self.topics.iter().find(|t| t.topic_id == topic_id)
    }

    /// `(topic_id, value)` for every evaluated topic.
    pub fn values(&self, measure: Measure) -> Vec<(String, f64)> {
        self.topics
            .iter()
            .filter_map(|t| t.value(measure).map(|v| (t.topic_id.clone(), v)))
            .collect()
    }

    /// One JSON object per topic followed by the means record (`"topic": "all"`).
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for t in &self.topics {
            let mut rec = Map::new();
            rec.insert("run".into(), json!(self.run_tag));
            rec.insert("topic".into(), json!(t.topic_id));
            rec.insert("N".into(), json!(t.n));
            rec.insert("R".into(), json!(t.r));
            for &m in &self.measures {
                let v = t.value(m).expect("report measures are computed per topic");
                let v = if m == Measure::LastRel { json!(t.last_rel) } else { json!(v) };
                rec.insert(m.to_string(), v);
            }
            out.push_str(&Value::Object(rec).to_string());
            out.push('\n');
        }
        let mut means = Map::new();
        means.insert("run".into(), json!(self.run_tag));
        means.insert("topic".into(), json!("all"));
        means.insert("topics".into(), json!(self.topics.len()));
        for &m in &self.measures {
            means.insert(m.to_string(), json!(self.mean(m)));
        }
        means.insert("excluded".into(), json!(self.excluded));
        out.push_str(&Value::Object(means).to_string());
        out.push('\n');
        out
    }
}

impl fmt::Display for MetricReport {
    /// Fixed-width table, one row per topic and a final `all` row of means.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<14} {:>6} {:>5}", "topic", "N", "R")?;
        for m in &self.measures {
            write!(f, " {:>10}", m.to_string())?;
        }
        writeln!(f)?;
        for t in &self.topics {
            write!(f, "{:<14} {:>6} {:>5}", t.topic_id, t.n, t.r)?;
            for &m in &self.measures {
                match m {
                    Measure::LastRel => write!(f, " {:>10}", t.last_rel)?,
                    _ => write!(f, " {:>10.4}", t.value(m).unwrap_or(f64::NAN))?,
                }
            }
            writeln!(f)?;
        }
        write!(f, "{:<14} {:>6} {:>5}", "all", "", "")?;
        for &m in &self.measures {
            write!(f, " {:>10.4}", self.mean(m).unwrap_or(f64::NAN))?;
        }
        writeln!(f)?;
        for e in &self.excluded {
            writeln!(f, "excluded {}: {}", e.topic_id, e.reason)?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("run does not match the candidate sets (strict mode):\n{0}")]
    Incomplete(ConsistencyReport),
    #[error("run `{0}` covers no evaluable topic")]
    NoEvaluatedTopics(String),
}

/// The ranking evaluated for `topic`: run order restricted to candidates,
/// then unranked candidates in ascending pmid order.
pub fn completed_ranking(run: &RankedRun, topic: &Topic) -> Option<Vec<Pmid>> {
    let entries = run.topic(&topic.id)?;
    let candidates: HashSet<&Pmid> = topic.pmids.iter().collect();
    let mut ranking: Vec<Pmid> = entries
        .iter()
        .filter(|e| candidates.contains(&e.pmid))
        .map(|e| e.pmid.clone())
        .collect();
    let ranked: HashSet<&Pmid> = entries.iter().map(|e| &e.pmid).collect();
    let unranked: BTreeSet<&Pmid> = topic.pmids.iter().filter(|p| !ranked.contains(p)).collect();
    ranking.extend(unranked.into_iter().cloned());
    Some(ranking)
}

/// Evaluates `run` on every topic of `topics`. Topics with no relevant
/// candidate, or absent from the run, are excluded and listed.
pub fn evaluate(
    run: &RankedRun,
    topics: &TopicSet,
    qrels: &Qrels,
    options: &EvalOptions,
) -> Result<MetricReport, EvalError> {
    if options.completion == Completion::Strict {
        let report = validate_against(run, topics, qrels);
        if !report.is_complete() {
            return Err(EvalError::Incomplete(report));
        }
    }
    let mut ordered: Vec<&Topic> = topics.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));

    let outcomes: Vec<Result<TopicEval, ExcludedTopic>> = ordered
        .par_iter()
        .map(|topic| {
            let exclude = |reason| ExcludedTopic {
                topic_id: topic.id.clone(),
                reason,
            };
            let ranking = completed_ranking(run, topic).ok_or(exclude(ExclusionReason::NotInRun))?;
            let flags: Vec<bool> = ranking.iter().map(|p| qrels.is_relevant(&topic.id, p)).collect();
            TopicEval::from_ranking(&topic.id, &flags, options)
                .map_err(|_| exclude(ExclusionReason::NoRelevant))
        })
        .collect();

    let mut report = MetricReport {
        run_tag: run.tag().to_owned(),
        measures: options.measures(),
        topics: Vec::new(),
        excluded: Vec::new(),
    };
    for outcome in outcomes {
        match outcome {
            Ok(t) => report.topics.push(t),
            Err(e) => report.excluded.push(e),
        }
    }
    if report.topics.is_empty() {
        return Err(EvalError::NoEvaluatedTopics(run.tag().to_owned()));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_qrels, parse_topics};
    use crate::runio::read_run;

    #[test]
    fn measure_names_round_trip() {
        for m in EvalOptions::default().measures() {
            assert_eq!(m.to_string().parse::<Measure>().unwrap(), m);
        }
        assert_eq!("WSS95".parse::<Measure>().unwrap(), Measure::Wss(95));
        assert_eq!("Recall@10%".parse::<Measure>().unwrap(), Measure::Recall(10));
        assert!("ndcg".parse::<Measure>().is_err());
        assert!("recall@0".parse::<Measure>().is_err());
    }

    fn dataset() -> (TopicSet, Qrels) {
        let pids: String = (1..=10).map(|i| format!("{i}\n")).collect();
        let topics = parse_topics(
            format!("Topic: A\nTitle: a\nQuery:\nPids:\n{pids}Topic: B\nTitle: b\nQuery:\nPids:\n1\n2\n").as_bytes(),
        )
        .unwrap();
        let qrels = parse_qrels("A 0 3 1\nA 0 7 2\nA 0 1 0\nB 0 1 0\n".as_bytes()).unwrap();
        (topics, qrels)
    }

    #[test]
    fn perfect_ranking() {
        let (topics, qrels) = dataset();
        let mut text = String::from("A NF 3 1 10 r\nA NF 7 2 9 r\n");
        for (i, p) in [1, 2, 4, 5, 6, 8, 9, 10].iter().enumerate() {
            text.push_str(&format!("A NF {p} {} {} r\n", i + 3, 8 - i));
        }
        text.push_str("B NF 1 1 1 r\nB NF 2 2 0 r\n");
        let run = read_run(text.as_bytes()).unwrap();
        let report = evaluate(&run, &topics, &qrels, &EvalOptions::default()).unwrap();
        assert_eq!(report.topics.len(), 1);
        let a = &report.topics[0];
        assert_eq!((a.n, a.r, a.last_rel), (10, 2, 2));
        assert_eq!(a.ap, 1.0);
        assert!((a.wss[&100] - 0.8).abs() < 1e-12);
        assert_eq!(
            report.excluded,
            vec![ExcludedTopic { topic_id: "B".into(), reason: ExclusionReason::NoRelevant }]
        );
    }

    #[test]
    fn incomplete_run_is_completed_in_pmid_order() {
        let (topics, qrels) = dataset();
        // only 7 ranked; 3 lands after everything else ranked
        let run = read_run("A NF 7 1 5 r\nA NF 99 2 4 r\n".as_bytes()).unwrap();
        let topic = topics.get("A").unwrap();
        let ranking = completed_ranking(&run, topic).unwrap();
        let ids: Vec<&str> = ranking.iter().map(Pmid::as_str).collect();
        assert_eq!(ids, ["7", "1", "2", "3", "4", "5", "6", "8", "9", "10"]);
        let report = evaluate(&run, &topics, &qrels, &EvalOptions::default()).unwrap();
        assert_eq!(report.topics[0].last_rel, 4);
        assert_eq!(report.excluded[0].reason, ExclusionReason::NotInRun);

        let strict = EvalOptions { completion: Completion::Strict, ..Default::default() };
        assert!(matches!(
            evaluate(&run, &topics, &qrels, &strict),
            Err(EvalError::Incomplete(_))
        ));
    }

    #[test]
    fn no_evaluable_topic_is_error() {
        let (topics, qrels) = dataset();
        let run = read_run("B NF 1 1 1 r\n".as_bytes()).unwrap();
        assert!(matches!(
            evaluate(&run, &topics, &qrels, &EvalOptions::default()),
            Err(EvalError::NoEvaluatedTopics(_))
        ));
    }

    #[test]
    fn means_are_arithmetic() {
        let report = MetricReport {
            run_tag: "r".into(),
            measures: vec![Measure::Ap],
            topics: vec![
                TopicEval { topic_id: "A".into(), n: 1, r: 1, last_rel: 1, ap: 0.2, recall_at: BTreeMap::new(), wss: BTreeMap::new() },
                TopicEval { topic_id: "B".into(), n: 1, r: 1, last_rel: 1, ap: 0.4, recall_at: BTreeMap::new(), wss: BTreeMap::new() },
            ],
            excluded: vec![],
        };
        assert!((report.mean(Measure::Ap).unwrap() - 0.3).abs() < 1e-15);
        let lines = report.to_json_lines();
        assert_eq!(lines.lines().count(), 3);
        assert!(lines.lines().last().unwrap().contains("\"topic\":\"all\""));
    }
}
