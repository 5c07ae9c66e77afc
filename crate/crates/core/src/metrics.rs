//! Accuracy, trust and yield of a voting ensemble, their averages over a
//! domain of questions, and trust-constrained threshold selection.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::format::{sig12, sig12_opt};
use crate::outcome::{checked_probability, ConsensusMasses, OutcomeDistribution, QuestionProfile};

/// Header of the theoretical sweep CSV.
pub const SWEEP_CSV_HEADER: [&str; 10] = [
    "k", "n", "delta", "eta", "p_c", "p_i", "p_nc", "accuracy", "trust", "yield",
];

/// Performance of one `(n, k)` ensemble.
///
/// `trust` is `None` when the ensemble never commits (`yield_rate == 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub k: usize,
    pub n: usize,
    pub accuracy: f64,
    pub trust: Option<f64>,
    pub yield_rate: f64,
}

impl MetricsRow {
    pub fn from_outcomes(k: usize, n: usize, dist: &OutcomeDistribution) -> Self {
        let yield_rate = dist.p_c + dist.p_i;
        let trust = (yield_rate > 0.0).then(|| dist.p_c / yield_rate);
        Self {
            k,
            n,
            accuracy: dist.p_c,
            trust,
            yield_rate,
        }
    }
}

pub fn compute_metrics(dist: &OutcomeDistribution, rule: &crate::VotingRule) -> MetricsRow {
    MetricsRow::from_outcomes(rule.k(), rule.n(), dist)
}

/// Averages over a domain of questions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSummary {
    pub mean_p_c: f64,
    pub mean_p_i: f64,
    pub mean_p_nc: f64,
    /// Ratio of the mean consensus masses; this is what pooled answer counts
    /// measure.
    pub pooled_trust: Option<f64>,
    /// Mean of the per-question trusts over questions that can commit.
    pub macro_trust: Option<f64>,
    pub question_count: usize,
}

pub fn domain_summary(dists: &[OutcomeDistribution]) -> Result<DomainSummary> {
    if dists.is_empty() {
        return Err(Error::Empty("distribution list"));
    }
    let count = dists.len() as f64;
    let mean = |f: fn(&OutcomeDistribution) -> f64| dists.iter().map(f).sum::<f64>() / count;
    let mean_p_c = mean(|d| d.p_c);
    let mean_p_i = mean(|d| d.p_i);
    let mean_p_nc = mean(|d| d.p_nc);
    let pooled_yield = mean_p_c + mean_p_i;
    let pooled_trust = (pooled_yield > 0.0).then(|| mean_p_c / pooled_yield);

    let trusts: Vec<f64> = dists
        .iter()
        .filter(|d| d.p_c + d.p_i > 0.0)
        .map(|d| d.p_c / (d.p_c + d.p_i))
        .collect();
    let macro_trust = (!trusts.is_empty()).then(|| trusts.iter().sum::<f64>() / trusts.len() as f64);

    Ok(DomainSummary {
        mean_p_c,
        mean_p_i,
        mean_p_nc,
        pooled_trust,
        macro_trust,
        question_count: dists.len(),
    })
}

/// One line of a theoretical sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub outcome: OutcomeDistribution,
    pub metrics: MetricsRow,
}

/// Outcomes and metrics for every threshold `k = 1..=n`.
pub fn sweep_table(profile: &QuestionProfile, n: usize) -> Result<Vec<SweepRow>> {
    let masses = ConsensusMasses::new(profile, n)?;
    Ok(masses
        .all_thresholds()
        .into_iter()
        .enumerate()
        .map(|(idx, outcome)| SweepRow {
            outcome,
            metrics: MetricsRow::from_outcomes(idx + 1, n, &outcome),
        })
        .collect())
}

pub fn sweep_thresholds(profile: &QuestionProfile, n: usize) -> Result<Vec<MetricsRow>> {
    Ok(sweep_table(profile, n)?.into_iter().map(|r| r.metrics).collect())
}

/// Result of a trust-constrained threshold search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdChoice {
    Threshold(usize),
    NoFeasibleThreshold,
}

/// Picks the threshold with the highest yield among rows whose trust reaches
/// `trust_target`; ties go to the smaller `k`.
pub fn select_threshold(rows: &[MetricsRow], trust_target: f64) -> Result<ThresholdChoice> {
    if rows.is_empty() {
        return Err(Error::Empty("metrics rows"));
    }
    let target = checked_probability("trust target", trust_target)?;
    let best = rows
        .iter()
        .filter(|r| r.trust.is_some_and(|t| t >= target))
        .fold(None::<&MetricsRow>, |best, row| match best {
            Some(b) if b.yield_rate > row.yield_rate => Some(b),
            Some(b) if b.yield_rate == row.yield_rate && b.k <= row.k => Some(b),
            _ => Some(row),
        });
    Ok(match best {
        Some(row) => {
            assert!(row.trust.is_some_and(|t| t >= target));
            ThresholdChoice::Threshold(row.k)
        }
        None => ThresholdChoice::NoFeasibleThreshold,
    })
}

pub fn write_sweep_csv<W: Write>(
    out: W,
    profile: &QuestionProfile,
    rows: &[SweepRow],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_CSV_HEADER)?;
    for row in rows {
        let m = &row.metrics;
        let o = &row.outcome;
        w.write_record([
            m.k.to_string(),
            m.n.to_string(),
            sig12(profile.delta()),
            sig12(profile.eta()),
            sig12(o.p_c),
            sig12(o.p_i),
            sig12(o.p_nc),
            sig12(m.accuracy),
            sig12_opt(m.trust),
            sig12(m.yield_rate),
        ])?;
    }
    w.flush().map_err(|e| Error::io("writing sweep csv", e))?;
    Ok(())
}

/// Reads back the metrics columns of a sweep CSV, theoretical or measured.
///
/// Only `k`, `n`, `accuracy`, `trust` and `yield` are used; other columns are
/// ignored. Rows with an empty accuracy (unlabeled measurements) are read as
/// zero accuracy.
pub fn read_metrics_csv<R: Read>(input: R) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidArgument(format!("metrics csv lacks a `{name}` column")))
    };
    let (k_col, n_col, acc_col, trust_col, yield_col) = (
        column("k")?,
        column("n")?,
        column("accuracy")?,
        column("trust")?,
        column("yield")?,
    );

    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        // Line 1 is the header.
        let line = idx + 2;
        let field = |col: usize| record.get(col).unwrap_or("").trim();
        let bad = |what: &str, value: &str| {
            Error::InvalidArgument(format!("metrics csv line {line}: bad {what} `{value}`"))
        };
        let number = |col: usize, what: &str| -> Result<Option<f64>> {
            let v = field(col);
            if v.is_empty() {
                return Ok(None);
            }
            v.parse::<f64>().map(Some).map_err(|_| bad(what, v))
        };
        let k = field(k_col).parse().map_err(|_| bad("k", field(k_col)))?;
        let n = field(n_col).parse().map_err(|_| bad("n", field(n_col)))?;
        rows.push(MetricsRow {
            k,
            n,
            accuracy: number(acc_col, "accuracy")?.unwrap_or(0.0),
            trust: number(trust_col, "trust")?,
            yield_rate: number(yield_col, "yield")?.ok_or_else(|| bad("yield", ""))?,
        });
    }
    Ok(rows)
}
