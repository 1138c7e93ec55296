use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum MetricError {
    #[error("no relevant documents in the ranking")]
    NoRelevant,
    #[error("percentage {0} outside (0, 100]")]
    InvalidPercent(f64),
}

fn relevant_count(ranking: &[bool]) -> Result<usize, MetricError> {
    match ranking.iter().filter(|&&r| r).count() {
        0 => Err(MetricError::NoRelevant),
        r => Ok(r),
    }
}

fn check_percent(p: f64) -> Result<(), MetricError> {
    if p > 0.0 && p <= 100.0 {
        Ok(())
    } else {
        Err(MetricError::InvalidPercent(p))
    }
}

/// `ceil(percent * count / 100)`, clamped to `count`.
pub(crate) fn percent_ceil(percent: f64, count: usize) -> usize {
    let c = (percent * count as f64 / 100.0).ceil() as usize;
    c.min(count)
}

/// 1-based rank of the deepest relevant document.
///
/// `ranking[i]` is the relevance of the document at rank `i + 1`.
pub fn last_rel(ranking: &[bool]) -> Result<usize, MetricError> {
    ranking
        .iter()
        .rposition(|&r| r)
        .map(|i| i + 1)
        .ok_or(MetricError::NoRelevant)
}

/// Average precision over the full ranking.
pub fn average_precision(ranking: &[bool]) -> Result<f64, MetricError> {
    let r = relevant_count(ranking)?;
    let mut found = 0usize;
    let mut sum = 0.0;
    for (i, _) in ranking.iter().enumerate().filter(|(_, &rel)| rel) {
        found += 1;
        sum += found as f64 / (i + 1) as f64;
    }
    Ok(sum / r as f64)
}

/// Fraction of relevant documents within the top `ceil(p% * N)` ranks.
pub fn recall_at_percent(ranking: &[bool], percent: f64) -> Result<f64, MetricError> {
    check_percent(percent)?;
    let r = relevant_count(ranking)?;
    let cutoff = percent_ceil(percent, ranking.len());
    let found = ranking[..cutoff].iter().filter(|&&rel| rel).count();
    Ok(found as f64 / r as f64)
}

/// Work saved over sampling at `k%` recall:
/// `(N - r_k) / N - (1 - k / 100)` where `r_k` is the rank at which
/// `ceil(k% * R)` relevant documents have been seen. May be negative.
pub fn wss(ranking: &[bool], k: f64) -> Result<f64, MetricError> {
    check_percent(k)?;
    let r = relevant_count(ranking)?;
    let needed = percent_ceil(k, r).max(1);
    let mut found = 0;
    let mut rank_k = ranking.len();
    for (i, &rel) in ranking.iter().enumerate() {
        if rel {
            found += 1;
            if found == needed {
                rank_k = i + 1;
                break;
            }
        }
    }
    let n = ranking.len() as f64;
    Ok((n - rank_k as f64) / n - (1.0 - k / 100.0))
}
