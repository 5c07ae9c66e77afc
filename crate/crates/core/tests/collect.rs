use std::path::PathBuf;
use std::time::{Duration, Instant};

use vote_ensemble::aggregation::{collect_responses, CollectOptions, Normalizer, Question, RecordStatus};
use vote_ensemble::estimation::estimate_profile;
use vote_ensemble::Error;

fn agent(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures/agents")
        .join(name)
        .display()
        .to_string()
}

fn questions(n: usize) -> Vec<Question> {
    (0..n)
        .map(|i| Question {
            question_id: format!("q{i}"),
            prompt: format!("What is {i} times 6?"),
        })
        .collect()
}

fn options(replicates: u64) -> CollectOptions {
    CollectOptions {
        replicates,
        timeout: Duration::from_secs(20),
        jobs: 4,
        normalizer: Normalizer::Integer,
    }
}

#[test]
fn echo_agent_is_deterministic() {
    let template = format!("{} {{prompt}}", agent("echo_agent.sh"));
    let a = collect_responses(&template, &questions(3), &options(4)).unwrap();
    let b = collect_responses(&template, &questions(3), &options(4)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 12);
    let keys: Vec<_> = a.records().iter().map(|r| (r.question_id.as_str(), r.replicate)).collect();
    assert_eq!(keys[..5], [("q0", 0), ("q0", 1), ("q0", 2), ("q0", 3), ("q1", 0)]);
    assert!(a.records().iter().all(|r| r.raw == "The answer is 42\n" && r.answer.as_deref() == Some("42")));
}

#[test]
fn failing_agent_yields_failure_records() {
    let template = format!("{} {{prompt}}", agent("failing_agent.sh"));
    let set = collect_responses(&template, &questions(2), &options(3)).unwrap();
    assert_eq!(set.len(), 6);
    for r in set.records() {
        assert_eq!(r.status(), RecordStatus::Failed);
        assert!(r.failure.as_deref().unwrap().contains('3'), "{:?}", r.failure);
        assert_eq!(r.answer, None);
    }
}

#[test]
fn timeouts_are_recorded_and_collection_continues() {
    let template = format!("{} {{replicate}} {{prompt}}", agent("slow_agent.sh"));
    let opts = CollectOptions {
        timeout: Duration::from_millis(1500),
        ..options(4)
    };
    // Replicate r sleeps r seconds: 0 and 1 finish, 2 and 3 time out.
    let start = Instant::now();
    let set = collect_responses(&template, &questions(1), &opts).unwrap();
    assert!(start.elapsed() < Duration::from_secs(10));
    let status: Vec<_> = set.records().iter().map(|r| r.status()).collect();
    assert_eq!(
        status,
        [RecordStatus::Parsed, RecordStatus::Parsed, RecordStatus::Failed, RecordStatus::Failed]
    );
    assert!(set.records()[3].failure.as_deref().unwrap().starts_with("timeout"));
}

#[test]
fn missing_command_fails_before_any_call() {
    let err = collect_responses("/no/such/agent {prompt}", &questions(1), &options(1)).unwrap_err();
    assert!(matches!(err, Error::NotExecutable(_)), "{err}");
    let err = collect_responses(&agent("echo_agent.sh"), &questions(1), &options(1)).unwrap_err();
    assert!(err.to_string().contains("{prompt}"), "{err}");
}

#[test]
fn sampled_agent_parameters_are_recovered() {
    let template = format!("{} {{replicate}} 0.3 0.2 12 21 {{prompt}}", agent("categorical_agent.sh"));
    let set = collect_responses(&template, &questions(1), &options(1000)).unwrap();
    let answers = &set.answers_by_question()["q0"];
    assert_eq!(answers.len(), 1000);
    let est = estimate_profile(answers, "12").unwrap();
    assert!((est.delta_hat - 0.3).abs() <= 0.05, "{est:?}");
    assert!((est.eta_hat - 0.2).abs() <= 0.05, "{est:?}");
    assert_eq!(est.dominant_incorrect.as_deref(), Some("21"));
}
