use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::records::{GroundTruth, RecordStatus, ResponseSet};
use crate::error::{Error, Result};
use crate::format::{sig12, sig12_opt};
use crate::metrics::MetricsRow;
use crate::outcome::TiePolicy;
use crate::simulator::{trial_seed, ConsensusDecision, DecisionReason, Outcome};

pub const MEASURED_CSV_HEADER: [&str; 11] = [
    "source", "k", "n", "delta", "eta", "p_c", "p_i", "p_nc", "accuracy", "trust", "yield",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AggregateOptions {
    pub k: usize,
    pub tie_policy: TiePolicy,
    /// Seeds random tie breaks; unused by the other policies.
    pub seed: u64,
}

/// Plurality vote over canonical answers.
///
/// The leading answer wins when it has at least `k` votes and no other answer
/// matches its count. The decision never looks at the ground truth. Ties at
/// or above `k` abstain, or under [`TiePolicy::RandomAmongTied`] go to a
/// uniform draw among the tied answers in lexicographic order.
pub fn plurality_vote<R: Rng + ?Sized>(
    counts: &BTreeMap<String, usize>,
    k: usize,
    tie_policy: TiePolicy,
    rng: &mut R,
) -> (Option<String>, DecisionReason) {
    let top = counts.values().copied().max().unwrap_or(0);
    if top < k || top == 0 {
        return (None, DecisionReason::BelowThreshold);
    }
    let leaders: Vec<&String> = counts
        .iter()
        .filter(|(_, &c)| c == top)
        .map(|(label, _)| label)
        .collect();
    match (leaders.len(), tie_policy) {
        (1, _) => (Some(leaders[0].clone()), DecisionReason::ThresholdMet),
        (len, TiePolicy::RandomAmongTied) => {
            (Some(leaders[rng.gen_range(0..len)].clone()), DecisionReason::TieBroken)
        }
        _ => (None, DecisionReason::Tie),
    }
}

/// Vote outcome for one question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuestionDecision {
    pub question_id: String,
    pub decision: ConsensusDecision<String>,
    /// Parseable answers tallied.
    pub n: usize,
    pub counts: BTreeMap<String, usize>,
    pub unparseable: usize,
    pub failed: usize,
    /// The threshold exceeds the number of parseable answers, so this question
    /// could not reach consensus.
    pub threshold_exceeds_n: bool,
}

/// Metrics measured from decision counts at one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeasuredMetrics {
    pub k: usize,
    /// Largest per-question ensemble size.
    pub n: usize,
    pub questions: usize,
    pub consensus: usize,
    /// Correct and incorrect consensus counts; `None` without ground truth.
    pub labeled: Option<(usize, usize)>,
}

impl MeasuredMetrics {
    pub fn yield_rate(&self) -> f64 {
        self.consensus as f64 / self.questions as f64
    }

    pub fn accuracy(&self) -> Option<f64> {
        self.labeled
            .map(|(correct, _)| correct as f64 / self.questions as f64)
    }

    pub fn trust(&self) -> Option<f64> {
        match self.labeled {
            Some((correct, _)) if self.consensus > 0 => {
                Some(correct as f64 / self.consensus as f64)
            }
            _ => None,
        }
    }

    /// Theoretical-style row; only available with ground truth.
    pub fn as_metrics_row(&self) -> Option<MetricsRow> {
        Some(MetricsRow {
            k: self.k,
            n: self.n,
            accuracy: self.accuracy()?,
            trust: self.trust(),
            yield_rate: self.yield_rate(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusReport {
    pub questions: Vec<QuestionDecision>,
    /// Metrics at the requested threshold.
    pub at_k: MeasuredMetrics,
    /// Metrics for every `k` from 1 to the largest per-question ensemble.
    pub sweep: Vec<MeasuredMetrics>,
    pub question_count: usize,
    pub total_records: usize,
    pub tallied_count: usize,
    pub unparseable_count: usize,
    pub failed_count: usize,
    /// Unparseable plus failed records.
    pub discarded_response_count: usize,
    /// Whether some questions had fewer parseable answers than others.
    pub mixed_n: bool,
}

struct Tallied<'a> {
    question_id: &'a str,
    counts: BTreeMap<String, usize>,
    n: usize,
    unparseable: usize,
    failed: usize,
    truth: Option<&'a str>,
    seed: u64,
}

impl Tallied<'_> {
    fn decide(&self, k: usize, tie_policy: TiePolicy) -> ConsensusDecision<String> {
        // A fresh stream per question, identical for every k, so a random tie
        // break picks the same answer at every threshold.
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let (winner, reason) = plurality_vote(&self.counts, k, tie_policy, &mut rng);
        let outcome = match (&winner, self.truth) {
            (None, _) => Outcome::NoConsensus,
            (Some(_), None) => Outcome::ConsensusUnlabeled,
            (Some(w), Some(t)) if w == t => Outcome::ConsensusCorrect,
            (Some(_), Some(_)) => Outcome::ConsensusIncorrect,
        };
        ConsensusDecision {
            outcome,
            winning_label: winner,
            reason,
        }
    }
}

/// Threshold-votes every question in `set`.
///
/// Unparseable and failed records are dropped before tallying, so each
/// question's ensemble size is its number of parseable answers. With ground
/// truth every question must have a truth entry; without it, consensus is
/// reported but trust and accuracy are undefined.
pub fn aggregate(
    set: &ResponseSet,
    truth: Option<&GroundTruth>,
    options: &AggregateOptions,
) -> Result<ConsensusReport> {
    if set.is_empty() {
        return Err(Error::Empty("response set"));
    }
    if options.k == 0 {
        return Err(Error::InvalidRule("threshold k must be at least 1".into()));
    }
    if options.tie_policy == TiePolicy::ExtendUntilBroken {
        return Err(Error::InvalidArgument(
            "the extend tie policy needs live agents; recorded logs support no-consensus or random"
                .into(),
        ));
    }

    let tallies = set
        .by_question()
        .into_iter()
        .enumerate()
        .map(|(idx, (question_id, records))| {
            let mut counts = BTreeMap::new();
            let (mut unparseable, mut failed) = (0, 0);
            for r in records {
                match r.status() {
                    RecordStatus::Parsed => {
                        *counts.entry(r.answer.clone().expect("parsed")).or_default() += 1
                    }
                    RecordStatus::Unparseable => unparseable += 1,
                    RecordStatus::Failed => failed += 1,
                }
            }
            let truth = match truth {
                Some(t) => Some(t.get(question_id).ok_or_else(|| {
                    Error::InvalidArgument(format!("no ground truth for question `{question_id}`"))
                })?),
                None => None,
            };
            Ok(Tallied {
                question_id,
                n: counts.values().sum(),
                counts,
                unparseable,
                failed,
                truth,
                seed: trial_seed(options.seed, idx as u64),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let max_n = tallies.iter().map(|t| t.n).max().unwrap_or(0);
    let labeled = truth.is_some();
    let measure = |k: usize| {
        let decisions: Vec<_> = tallies.iter().map(|t| t.decide(k, options.tie_policy)).collect();
        let count = |o: Outcome| decisions.iter().filter(|d| d.outcome == o).count();
        MeasuredMetrics {
            k,
            n: max_n,
            questions: tallies.len(),
            consensus: decisions.iter().filter(|d| d.outcome.is_consensus()).count(),
            labeled: labeled
                .then(|| (count(Outcome::ConsensusCorrect), count(Outcome::ConsensusIncorrect))),
        }
    };

    let questions: Vec<QuestionDecision> = tallies
        .iter()
        .map(|t| QuestionDecision {
            question_id: t.question_id.to_string(),
            decision: t.decide(options.k, options.tie_policy),
            n: t.n,
            counts: t.counts.clone(),
            unparseable: t.unparseable,
            failed: t.failed,
            threshold_exceeds_n: options.k > t.n,
        })
        .collect();

    let unparseable_count = questions.iter().map(|q| q.unparseable).sum();
    let failed_count = questions.iter().map(|q| q.failed).sum();
    let tallied_count = questions.iter().map(|q| q.n).sum();
    let report = ConsensusReport {
        at_k: measure(options.k),
        sweep: (1..=max_n).map(measure).collect(),
        question_count: questions.len(),
        total_records: set.len(),
        tallied_count,
        unparseable_count,
        failed_count,
        discarded_response_count: unparseable_count + failed_count,
        mixed_n: questions.iter().any(|q| q.n != max_n),
        questions,
    };
    debug_assert_eq!(
        report.tallied_count + report.discarded_response_count,
        report.total_records
    );
    Ok(report)
}

#[derive(Serialize)]
struct QuestionLine<'a> {
    question_id: &'a str,
    outcome: &'static str,
    winning_label: Option<&'a str>,
    reason: &'static str,
    n: usize,
    counts: &'a BTreeMap<String, usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    flags: Vec<&'static str>,
}

impl ConsensusReport {
    /// One JSON object per question, in question order.
    pub fn write_decisions_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for q in &self.questions {
            let mut flags = Vec::new();
            if q.threshold_exceeds_n {
                flags.push("threshold_exceeds_n");
            }
            if q.unparseable + q.failed > 0 {
                flags.push("discarded_responses");
            }
            let line = QuestionLine {
                question_id: &q.question_id,
                outcome: q.decision.outcome.as_str(),
                winning_label: q.decision.winning_label.as_deref(),
                reason: q.decision.reason.as_str(),
                n: q.n,
                counts: &q.counts,
                flags,
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n").map_err(|e| Error::io("writing report", e))?;
        }
        out.flush().map_err(|e| Error::io("writing report", e))
    }

    /// The measured sweep as a metrics CSV with a leading `source` column.
    pub fn write_metrics_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(MEASURED_CSV_HEADER)?;
        for m in &self.sweep {
            let q = m.questions as f64;
            let (p_c, p_i) = match m.labeled {
                Some((c, i)) => (Some(c as f64 / q), Some(i as f64 / q)),
                None => (None, None),
            };
            w.write_record([
                "measured".to_string(),
                m.k.to_string(),
                m.n.to_string(),
                String::new(),
                String::new(),
                sig12_opt(p_c),
                sig12_opt(p_i),
                sig12((m.questions - m.consensus) as f64 / q),
                sig12_opt(m.accuracy()),
                sig12_opt(m.trust()),
                sig12(m.yield_rate()),
            ])?;
        }
        w.flush().map_err(|e| Error::io("writing metrics csv", e))?;
        Ok(())
    }
}
