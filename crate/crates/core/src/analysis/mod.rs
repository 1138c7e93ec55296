//! Statistical and per-topic comparison of runs.

pub mod stats;

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{Qrels, TopicSet};
use crate::metrics::{evaluate, EvalError, EvalOptions, Measure, MetricReport};
use crate::runio::RankedRun;

pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("a paired t-test needs at least 2 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("number of comparisons must be at least 1")]
    NoComparisons,
    #[error("runs `{0}` and `{1}` share no evaluated topic")]
    NoCommonTopics(String, String),
    #[error("measure {0} is not part of the report")]
    MissingMeasure(Measure),
    #[error("a convergence series needs at least 2 checkpoints, got {0}")]
    SeriesTooShort(usize),
    #[error("checkpoint steps must be strictly increasing ({0} follows {1})")]
    UnorderedSteps(u64, u64),
    #[error("checkpoint {step}: {source}")]
    Checkpoint {
        step: u64,
        #[source]
        source: EvalError,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    /// All differences are zero; p is 1.
    IdenticalRuns,
    /// Differences are constant and non-zero; p is 0.
    ConstantDifference,
}

/// Student's paired t-test on topic-aligned values with Bonferroni correction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedComparison {
    pub pairs: Vec<(f64, f64)>,
    pub mean_difference: f64,
    pub t_statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub corrected_p: f64,
    pub n_comparisons: usize,
    pub degenerate: Option<Degeneracy>,
}

impl PairedComparison {
    pub fn significant(&self, alpha: f64) -> bool {
        self.corrected_p < alpha
    }
}

/// Two-tailed paired t-test of `a` against `b` (`d = a - b`, sample standard
/// deviation), p multiplied by `n_comparisons` and capped at 1.
pub fn paired_ttest(
    a: &[f64],
    b: &[f64],
    n_comparisons: usize,
) -> Result<PairedComparison, AnalysisError> {
    if a.len() != b.len() {
        return Err(AnalysisError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(AnalysisError::TooFewPairs(a.len()));
    }
    if n_comparisons == 0 {
        return Err(AnalysisError::NoComparisons);
    }
    let n = a.len() as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    let df = a.len() - 1;

    let (t, p, degenerate) = if diffs.iter().all(|&d| d == 0.0) {
        (0.0, 1.0, Some(Degeneracy::IdenticalRuns))
    } else if sd == 0.0 {
        (f64::INFINITY.copysign(mean), 0.0, Some(Degeneracy::ConstantDifference))
    } else {
        let t = mean / (sd / n.sqrt());
        (t, stats::student_t_two_tailed(t, df as f64), None)
    };
    Ok(PairedComparison {
        pairs: a.iter().copied().zip(b.iter().copied()).collect(),
        mean_difference: mean,
        t_statistic: t,
        df,
        p_value: p,
        corrected_p: (p * n_comparisons as f64).min(1.0),
        n_comparisons,
        degenerate,
    })
}

type Aligned = (Vec<(String, f64, f64)>, Vec<String>);

/// Values of `measure` on the topics evaluated in both reports, in topic
/// order, plus the topics dropped because only one report has them.
fn align(
    a: &MetricReport,
    b: &MetricReport,
    measure: Measure,
) -> Result<Aligned, AnalysisError> {
    let lookup = |r: &MetricReport| -> Result<BTreeMap<String, f64>, AnalysisError> {
        r.topics
            .iter()
            .map(|t| {
                t.value(measure)
                    .map(|v| (t.topic_id.clone(), v))
                    .ok_or(AnalysisError::MissingMeasure(measure))
            })
            .collect()
    };
    let va = lookup(a)?;
    let vb = lookup(b)?;
    let mut aligned = Vec::new();
    let mut dropped = Vec::new();
    for (topic, &x) in &va {
        match vb.get(topic) {
            Some(&y) => aligned.push((topic.clone(), x, y)),
            None => dropped.push(topic.clone()),
        }
    }
    dropped.extend(vb.keys().filter(|t| !va.contains_key(*t)).cloned());
    dropped.sort();
    if aligned.is_empty() {
        return Err(AnalysisError::NoCommonTopics(a.run_tag.clone(), b.run_tag.clone()));
    }
    if !dropped.is_empty() {
        log::warn!(
            "{} vs {}: {} topic(s) evaluated by only one run were dropped",
            a.run_tag,
            b.run_tag,
            dropped.len()
        );
    }
    Ok((aligned, dropped))
}

/// One row of a focal-run comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunComparison {
    pub measure: String,
    pub focal: String,
    pub other: String,
    pub focal_mean: f64,
    pub other_mean: f64,
    pub topics: Vec<String>,
    pub test: PairedComparison,
    pub significant: bool,
    pub alpha: f64,
}

/// Tests the focal run against each of `others` on each measure. The
/// Bonferroni family is the `others.len()` comparisons made per measure.
pub fn compare_runs(
    focal: &MetricReport,
    others: &[MetricReport],
    measures: &[Measure],
    alpha: f64,
) -> Result<Vec<RunComparison>, AnalysisError> {
    let family = others.len();
    let mut rows = Vec::new();
    for &measure in measures {
        for other in others {
            let (aligned, _) = align(focal, other, measure)?;
            let a: Vec<f64> = aligned.iter().map(|x| x.1).collect();
            let b: Vec<f64> = aligned.iter().map(|x| x.2).collect();
            let test = paired_ttest(&a, &b, family)?;
            rows.push(RunComparison {
                measure: measure.to_string(),
                focal: focal.run_tag.clone(),
                other: other.run_tag.clone(),
                focal_mean: a.iter().sum::<f64>() / a.len() as f64,
                other_mean: b.iter().sum::<f64>() / b.len() as f64,
                topics: aligned.into_iter().map(|x| x.0).collect(),
                significant: test.significant(alpha),
                test,
                alpha,
            });
        }
    }
    Ok(rows)
}

/// Writes comparison rows as a CSV table.
pub fn write_comparisons<W: Write>(rows: &[RunComparison], out: W) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "measure", "focal", "other", "focal_mean", "other_mean", "n_topics", "t", "df", "p",
        "n_comparisons", "corrected_p", "significant", "degenerate",
    ])?;
    for r in rows {
        w.write_record([
            r.measure.clone(),
            r.focal.clone(),
            r.other.clone(),
            format!("{:.6}", r.focal_mean),
            format!("{:.6}", r.other_mean),
            r.topics.len().to_string(),
            format!("{:.6}", r.test.t_statistic),
            r.test.df.to_string(),
            format!("{:.6e}", r.test.p_value),
            r.test.n_comparisons.to_string(),
            format!("{:.6e}", r.test.corrected_p),
            r.significant.to_string(),
            r.test
                .degenerate
                .map(|d| format!("{d:?}"))
                .unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainLossEntry {
    pub topic_id: String,
    /// Run A minus run B.
    pub delta: f64,
    pub value_a: f64,
    pub value_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainLoss {
    pub measure: String,
    pub run_a: String,
    pub run_b: String,
    /// Sorted by delta descending, ties by topic id.
    pub entries: Vec<GainLossEntry>,
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// Topics evaluated by only one of the runs.
    pub dropped: Vec<String>,
}

/// Per-topic differences `A - B` on `measure`.
pub fn gain_loss(
    a: &MetricReport,
    b: &MetricReport,
    measure: Measure,
) -> Result<GainLoss, AnalysisError> {
    let (aligned, dropped) = align(a, b, measure)?;
    let mut entries: Vec<GainLossEntry> = aligned
        .into_iter()
        .map(|(topic_id, value_a, value_b)| GainLossEntry {
            topic_id,
            delta: value_a - value_b,
            value_a,
            value_b,
        })
        .collect();
    entries.sort_by(|x, y| {
        y.delta
            .total_cmp(&x.delta)
            .then_with(|| x.topic_id.cmp(&y.topic_id))
    });
    let wins = entries.iter().filter(|e| e.delta > 0.0).count();
    let losses = entries.iter().filter(|e| e.delta < 0.0).count();
    Ok(GainLoss {
        measure: measure.to_string(),
        run_a: a.run_tag.clone(),
        run_b: b.run_tag.clone(),
        ties: entries.len() - wins - losses,
        wins,
        losses,
        entries,
        dropped,
    })
}

/// Header: `topic_id,delta,value_a,value_b`.
pub fn write_gain_loss_table<W: Write>(gl: &GainLoss, out: W) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["topic_id", "delta", "value_a", "value_b"])?;
    for e in &gl.entries {
        w.write_record([
            e.topic_id.clone(),
            format!("{:.6}", e.delta),
            format!("{:.6}", e.value_a),
            format!("{:.6}", e.value_b),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergencePoint {
    pub step: u64,
    /// `(topic_id, value)` in topic order.
    pub values: Vec<(String, f64)>,
    pub mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Saturation {
    At(u64),
    NotWithinSeries,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Convergence {
    pub measure: String,
    pub alpha: f64,
    pub points: Vec<ConvergencePoint>,
    /// Highest mean; earliest step on ties.
    pub best_step: u64,
    pub saturation: Saturation,
}

/// Evaluates each checkpoint run and finds the saturation step: the first
/// step whose paired tests against every later step (Bonferroni over those
/// later steps) are all non-significant. The final step has no later step
/// to test against and never qualifies on its own.
pub fn convergence(
    series: &[(u64, RankedRun)],
    topics: &TopicSet,
    qrels: &Qrels,
    measure: Measure,
    options: &EvalOptions,
    alpha: f64,
) -> Result<Convergence, AnalysisError> {
    if series.len() < 2 {
        return Err(AnalysisError::SeriesTooShort(series.len()));
    }
    for pair in series.windows(2) {
        if pair[1].0 <= pair[0].0 {
            return Err(AnalysisError::UnorderedSteps(pair[1].0, pair[0].0));
        }
    }
    let reports: Vec<MetricReport> = series
        .iter()
        .map(|(step, run)| {
            evaluate(run, topics, qrels, options)
                .map_err(|source| AnalysisError::Checkpoint { step: *step, source })
        })
        .collect::<Result<_, _>>()?;

    let mut points = Vec::with_capacity(reports.len());
    for ((step, _), report) in series.iter().zip(&reports) {
        let values = report.values(measure);
        if values.len() != report.topics.len() {
            return Err(AnalysisError::MissingMeasure(measure));
        }
        let mean = values.iter().map(|v| v.1).sum::<f64>() / values.len() as f64;
        points.push(ConvergencePoint {
            step: *step,
            values,
            mean,
        });
    }

    let mut best = 0;
    for (i, p) in points.iter().enumerate() {
        if p.mean > points[best].mean {
            best = i;
        }
    }

    let mut saturation = Saturation::NotWithinSeries;
    'candidates: for i in 0..reports.len() - 1 {
        let family = reports.len() - 1 - i;
        for later in &reports[i + 1..] {
            let (aligned, _) = align(&reports[i], later, measure)?;
            let a: Vec<f64> = aligned.iter().map(|x| x.1).collect();
            let b: Vec<f64> = aligned.iter().map(|x| x.2).collect();
            if paired_ttest(&a, &b, family)?.significant(alpha) {
                continue 'candidates;
            }
        }
        saturation = Saturation::At(points[i].step);
        break;
    }

    Ok(Convergence {
        measure: measure.to_string(),
        alpha,
        best_step: points[best].step,
        points,
        saturation,
    })
}

/// Header: `step,mean,n_topics,best,saturation`.
pub fn write_convergence_table<W: Write>(c: &Convergence, out: W) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "mean", "n_topics", "best", "saturation"])?;
    let sat_step = match c.saturation {
        Saturation::At(s) => Some(s),
        Saturation::NotWithinSeries => None,
    };
    for p in &c.points {
        w.write_record([
            p.step.to_string(),
            format!("{:.6}", p.mean),
            p.values.len().to_string(),
            (p.step == c.best_step).to_string(),
            (Some(p.step) == sat_step).to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Topic -> value lookup used by callers that hold raw per-topic numbers.
pub fn values_by_topic(report: &MetricReport, measure: Measure) -> HashMap<String, f64> {
    report.values(measure).into_iter().collect()
}
