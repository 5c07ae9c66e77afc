//! Voting ensembles that may abstain.
//!
//! A question posed to an agent is described by two probabilities: how often
//! the agent is drawn to a single plausible-but-wrong ("specious") answer, and
//! how often it scatters over other wrong answers. An ensemble of `n` such
//! agents commits to an answer only when the leading answer collects at least
//! `k` votes and strictly beats its rival; otherwise it abstains.
//!
//! The crate offers:
//!
//! * [`outcome`]: exact probabilities of correct consensus, incorrect
//!   consensus and abstention for any `(n, k)`.
//! * [`metrics`]: accuracy, trust and yield, domain averages, and threshold
//!   selection under a trust target.
//! * [`simulator`]: seeded Monte Carlo ensembles, tie policies and
//!   large-ensemble convergence series.
//! * [`estimation`]: recovering question parameters from recorded answers.
//! * [`aggregation`]: threshold voting over real response logs.
//! * `cli` (feature `native`): the `vote-ensemble` command-line tool.

pub mod aggregation;
pub mod error;
pub mod estimation;
pub mod format;
pub mod metrics;
pub mod outcome;
pub mod simulator;
mod sum;

#[cfg(feature = "native")]
pub mod cli;

pub use error::{Error, Result};
pub use metrics::{MetricsRow, ThresholdChoice};
pub use outcome::{
    CategoricalOutcome, OutcomeDistribution, QuestionProfile, TiePolicy, VotingRule,
};
