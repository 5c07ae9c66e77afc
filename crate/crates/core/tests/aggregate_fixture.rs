use std::path::PathBuf;

use vote_ensemble::aggregation::{aggregate, load_responses, load_truth, AggregateOptions, Normalizer};
use vote_ensemble::simulator::Outcome;
use vote_ensemble::TiePolicy;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/aggregate").join(name)
}

fn report(k: usize) -> vote_ensemble::aggregation::ConsensusReport {
    let set = load_responses(&fixture("responses.jsonl"), Normalizer::Integer).unwrap();
    let truth = load_truth(&fixture("truth.csv"), Normalizer::Integer).unwrap();
    let options = AggregateOptions {
        k,
        tie_policy: TiePolicy::NoConsensusOnTie,
        seed: 0,
    };
    aggregate(&set, Some(&truth), &options).unwrap()
}

#[test]
fn report_matches_hand_tally() {
    let r = report(5);
    let mut jsonl = Vec::new();
    r.write_decisions_jsonl(&mut jsonl).unwrap();
    assert_eq!(
        String::from_utf8(jsonl).unwrap(),
        std::fs::read_to_string(fixture("expected_report_k5.jsonl")).unwrap()
    );
    let mut csv = Vec::new();
    r.write_metrics_csv(&mut csv).unwrap();
    assert_eq!(
        String::from_utf8(csv).unwrap(),
        std::fs::read_to_string(fixture("expected_metrics.csv")).unwrap()
    );
}

#[test]
fn record_accounting() {
    let r = report(5);
    assert_eq!(r.total_records, 60);
    assert_eq!((r.tallied_count, r.unparseable_count, r.failed_count), (58, 2, 0));
    assert!(r.mixed_n);
}

#[test]
fn plurality_decisions_by_threshold() {
    let outcomes = |k| -> Vec<Outcome> { report(k).questions.iter().map(|q| q.decision.outcome).collect() };
    use Outcome::*;
    assert_eq!(
        outcomes(1),
        [ConsensusCorrect, ConsensusCorrect, NoConsensus, ConsensusIncorrect, NoConsensus, ConsensusCorrect]
    );
    assert_eq!(
        outcomes(7),
        [ConsensusCorrect, NoConsensus, NoConsensus, NoConsensus, NoConsensus, NoConsensus]
    );
}

#[test]
fn random_ties_need_no_truth_and_are_seeded() {
    let set = load_responses(&fixture("responses.jsonl"), Normalizer::Integer).unwrap();
    let options = AggregateOptions {
        k: 1,
        tie_policy: TiePolicy::RandomAmongTied,
        seed: 11,
    };
    let a = aggregate(&set, None, &options).unwrap();
    let b = aggregate(&set, None, &options).unwrap();
    assert_eq!(a, b);
    // Every question commits at k = 1 once ties are broken.
    assert_eq!(a.at_k.yield_rate(), 1.0);
    assert_eq!(a.at_k.trust(), None);
    let q3 = &a.questions[2];
    assert!(matches!(q3.decision.winning_label.as_deref(), Some("100" | "1000")));
}
