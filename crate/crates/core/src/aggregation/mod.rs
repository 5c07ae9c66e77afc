//! Threshold voting over recorded agent answers.
//!
//! Raw answers are normalized to canonical strings, unparseable ones are set
//! aside, and each question is decided by plurality with a minimum vote count.

mod normalize;
mod records;
mod report;

#[cfg(feature = "native")]
mod collect;

pub use normalize::{normalize_answer, Normalizer};
pub use records::{
    load_responses, load_truth, read_responses, read_truth, GroundTruth, RecordStatus,
    ResponseRecord, ResponseSet,
};
pub use report::{
    aggregate, plurality_vote, AggregateOptions, ConsensusReport, MeasuredMetrics,
    QuestionDecision, MEASURED_CSV_HEADER,
};

#[cfg(feature = "native")]
pub use collect::{
    collect_responses, load_questions, read_questions, CollectOptions, Question,
    PROMPT_PLACEHOLDER,
};
