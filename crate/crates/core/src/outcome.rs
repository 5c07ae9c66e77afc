//! Exact outcome probabilities for a single agent and for a threshold-voting
//! ensemble of identical, independent agents.
//!
//! Every agent answers correctly with probability `(1-eta)(1-delta)`, gives
//! the specious answer with probability `(1-eta)delta`, and otherwise picks
//! one of the residual wrong answers. Residual answers never accumulate
//! enough votes to matter, so the ensemble state is the pair of counts
//! `(x_c, x_i)` and its law is trinomial. The ensemble commits to `C` when
//! `x_c >= k` and `x_c > x_i` (symmetrically for `I`) and abstains otherwise,
//! ties included.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sum::CompensatedSum;

/// Inputs this far outside `[0, 1]` are clamped instead of rejected.
pub const PROBABILITY_SLACK: f64 = 1e-12;

pub(crate) fn checked_probability(name: &'static str, value: f64) -> Result<f64> {
    if !value.is_finite() || !(-PROBABILITY_SLACK..=1.0 + PROBABILITY_SLACK).contains(&value) {
        return Err(Error::InvalidProbability { name, value });
    }
    Ok(value.clamp(0.0, 1.0))
}

/// Deceptiveness and bewilderment of one question for one kind of agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuestionProfile {
    delta: f64,
    eta: f64,
}

impl QuestionProfile {
    /// `delta` is the chance of being drawn to the specious answer, `eta` the
    /// chance of scattering over residual wrong answers when not deceived.
    pub fn new(delta: f64, eta: f64) -> Result<Self> {
        Ok(Self {
            delta: checked_probability("delta", delta)?,
            eta: checked_probability("eta", eta)?,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn single_agent(&self) -> CategoricalOutcome {
        CategoricalOutcome {
            p_correct: (1.0 - self.eta) * (1.0 - self.delta),
            p_specious: (1.0 - self.eta) * self.delta,
            p_other: self.eta,
        }
    }

    /// Probability that a single agent answers incorrectly.
    pub fn difficulty(&self) -> f64 {
        1.0 - (1.0 - self.eta) * (1.0 - self.delta)
    }

    /// Expected share of the most common answer in a large ensemble.
    pub fn max_expected_frequency(&self) -> f64 {
        (1.0 - self.eta) * self.delta.max(1.0 - self.delta)
    }
}

/// What an ensemble does when the correct and specious answers tie at or above
/// the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum TiePolicy {
    /// Abstain. This is the policy the exact engine evaluates.
    #[default]
    NoConsensusOnTie,
    /// Pick one of the tied answers uniformly at random.
    RandomAmongTied,
    /// Keep querying fresh agents until the tie breaks, up to `10 n` extra
    /// agents. Only meaningful where more agents can be drawn.
    ExtendUntilBroken,
}

impl TiePolicy {
    pub fn as_str(&self) -> &'static str {
        match self {
            TiePolicy::NoConsensusOnTie => "no-consensus",
            TiePolicy::RandomAmongTied => "random",
            TiePolicy::ExtendUntilBroken => "extend",
        }
    }
}

impl fmt::Display for TiePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TiePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "no-consensus" => Ok(TiePolicy::NoConsensusOnTie),
            "random" => Ok(TiePolicy::RandomAmongTied),
            "extend" => Ok(TiePolicy::ExtendUntilBroken),
            other => Err(Error::InvalidArgument(format!(
                "unknown tie policy `{other}` (expected no-consensus, random or extend)"
            ))),
        }
    }
}

/// Ensemble size, voting threshold and tie policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VotingRule {
    n: usize,
    k: usize,
    tie_policy: TiePolicy,
}

impl VotingRule {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidRule("ensemble size n must be at least 1".into()));
        }
        if k == 0 || k > n {
            return Err(Error::InvalidRule(format!(
                "threshold k must satisfy 1 <= k <= n, got k={k}, n={n}"
            )));
        }
        Ok(Self {
            n,
            k,
            tie_policy: TiePolicy::NoConsensusOnTie,
        })
    }

    pub fn with_tie_policy(mut self, tie_policy: TiePolicy) -> Self {
        self.tie_policy = tie_policy;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn tie_policy(&self) -> TiePolicy {
        self.tie_policy
    }
}

/// Single-agent answer probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CategoricalOutcome {
    pub p_correct: f64,
    pub p_specious: f64,
    pub p_other: f64,
}

/// Probabilities of consensus on the correct answer, consensus on the
/// specious answer, and no consensus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeDistribution {
    pub p_c: f64,
    pub p_i: f64,
    pub p_nc: f64,
}

impl OutcomeDistribution {
    /// Builds a distribution from the two consensus masses, assigning the
    /// remainder to no-consensus.
    pub fn from_consensus(p_c: f64, p_i: f64) -> Self {
        Self {
            p_c,
            p_i,
            p_nc: (1.0 - p_c - p_i).max(0.0),
        }
    }

    pub fn components(&self) -> [f64; 3] {
        [self.p_c, self.p_i, self.p_nc]
    }
}

pub fn single_agent_distribution(profile: &QuestionProfile) -> CategoricalOutcome {
    profile.single_agent()
}

pub fn difficulty(profile: &QuestionProfile) -> f64 {
    profile.difficulty()
}

pub fn max_expected_frequency(profile: &QuestionProfile) -> f64 {
    profile.max_expected_frequency()
}

/// `ln(n! / prod(counts!))`.
pub fn log_multinomial_coefficient(n: usize, counts: &[usize]) -> Result<f64> {
    let total: usize = counts.iter().sum();
    if total != n {
        return Err(Error::InvalidArgument(format!(
            "multinomial counts sum to {total}, expected {n}"
        )));
    }
    let denom: CompensatedSum = counts.iter().map(|&c| ln_factorial(c)).collect();
    Ok(ln_factorial(n) - denom.value())
}

fn ln_factorial(m: usize) -> f64 {
    if m < 2 {
        0.0
    } else {
        libm::lgamma(m as f64 + 1.0)
    }
}

/// `count * ln(p)` with `0 * ln(0) = 0`.
fn ln_power(count: usize, ln_p: f64) -> f64 {
    if count == 0 {
        0.0
    } else {
        count as f64 * ln_p
    }
}

/// Consensus masses for one `(profile, n)` pair, shared by every threshold.
///
/// `correct_mass[c]` is the probability that exactly `c` agents answer
/// correctly and strictly outnumber the specious votes; `specious_mass[i]` is
/// the mirror image. The consensus probability at threshold `k` is the tail
/// sum from `k` upwards.
#[derive(Debug, Clone)]
pub struct ConsensusMasses {
    n: usize,
    correct_mass: Vec<f64>,
    specious_mass: Vec<f64>,
}

impl ConsensusMasses {
    pub fn new(profile: &QuestionProfile, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidRule("ensemble size n must be at least 1".into()));
        }
        let agent = profile.single_agent();
        let ln_p = [
            agent.p_correct.ln(),
            agent.p_specious.ln(),
            agent.p_other.ln(),
        ];
        let ln_fact: Vec<f64> = (0..=n).map(ln_factorial).collect();

        let ln_term = |lead: usize, trail: usize, ln_lead: f64, ln_trail: f64| {
            let rest = n - lead - trail;
            ln_fact[n] - ln_fact[lead] - ln_fact[trail] - ln_fact[rest]
                + ln_power(lead, ln_lead)
                + ln_power(trail, ln_trail)
                + ln_power(rest, ln_p[2])
        };
        let column = |lead: usize, ln_lead: f64, ln_trail: f64| -> f64 {
            if lead == 0 {
                return 0.0;
            }
            let max_trail = (lead - 1).min(n - lead);
            let acc: CompensatedSum = (0..=max_trail)
                .map(|trail| ln_term(lead, trail, ln_lead, ln_trail))
                .filter(|t| *t > f64::NEG_INFINITY)
                .map(f64::exp)
                .collect();
            acc.value()
        };

        let correct_mass = (0..=n).map(|c| column(c, ln_p[0], ln_p[1])).collect();
        let specious_mass = (0..=n).map(|i| column(i, ln_p[1], ln_p[0])).collect();
        Ok(Self {
            n,
            correct_mass,
            specious_mass,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Outcome distribution at threshold `k`, with ties counted as no consensus.
    pub fn at_threshold(&self, k: usize) -> Result<OutcomeDistribution> {
        VotingRule::new(self.n, k)?;
        let p_c: CompensatedSum = self.correct_mass[k..].iter().copied().collect();
        let p_i: CompensatedSum = self.specious_mass[k..].iter().copied().collect();
        Ok(OutcomeDistribution::from_consensus(
            p_c.value().min(1.0),
            p_i.value().min(1.0),
        ))
    }

    /// Distributions for `k = 1..=n`, in order.
    pub fn all_thresholds(&self) -> Vec<OutcomeDistribution> {
        (1..=self.n)
            .map(|k| self.at_threshold(k).expect("k in range"))
            .collect()
    }
}

/// Exact outcome distribution of an ensemble.
///
/// Ties are always counted as no consensus here, whatever `rule.tie_policy()`
/// says; the other policies are available in the simulator.
pub fn exact_outcome_distribution(
    profile: &QuestionProfile,
    rule: &VotingRule,
) -> OutcomeDistribution {
    ConsensusMasses::new(profile, rule.n())
        .and_then(|m| m.at_threshold(rule.k()))
        .expect("VotingRule guarantees 1 <= k <= n")
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Brute-force enumeration over every sequence of individual agent
    //! answers. No multinomial coefficients, no log space.

    use super::QuestionProfile;

    pub(crate) fn enumerate(profile: &QuestionProfile, n: usize, k: usize) -> [f64; 3] {
        let probs = [
            (1.0 - profile.eta()) * (1.0 - profile.delta()),
            (1.0 - profile.eta()) * profile.delta(),
            profile.eta(),
        ];
        let mut out = [0.0; 3];
        let total = 3usize.pow(n as u32);
        for code in 0..total {
            let mut rest = code;
            let mut weight = 1.0;
            let (mut c, mut i) = (0, 0);
            for _ in 0..n {
                let choice = rest % 3;
                rest /= 3;
                weight *= probs[choice];
                match choice {
                    0 => c += 1,
                    1 => i += 1,
                    _ => {}
                }
            }
            let slot = if c >= k && c > i {
                0
            } else if i >= k && i > c {
                1
            } else {
                2
            };
            out[slot] += weight;
        }
        out
    }
}
