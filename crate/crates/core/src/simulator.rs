//! Monte Carlo ensembles drawn from the same generative model as the exact
//! engine, plus tie policies the closed form does not cover.
//!
//! Every trial owns a ChaCha8 stream seeded with [`trial_seed`], so results
//! depend only on `(seed, profile, rule, trials)` and not on how trials are
//! scheduled across threads.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::format::sig12;
use crate::outcome::{
    CategoricalOutcome, ConsensusMasses, OutcomeDistribution, QuestionProfile, TiePolicy,
    VotingRule,
};

pub const CONVERGENCE_CSV_HEADER: [&str; 6] = ["n", "delta", "eta", "p_c", "p_i", "p_nc"];

/// Cap on extra agents drawn by [`TiePolicy::ExtendUntilBroken`], as a
/// multiple of the ensemble size.
pub const EXTENSION_FACTOR: usize = 10;

/// One agent's answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ResponseLabel {
    Correct,
    Specious,
    /// A residual wrong answer, identified within its trial.
    Other(u64),
}

/// How residual (bewildered) answers are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BewilderedMode {
    /// Every residual answer is distinct, so residual answers never pile up.
    #[default]
    Unique,
    /// Residual answers are drawn uniformly from `m` alternatives and may
    /// gather votes; a residual consensus counts as incorrect.
    FinitePool(u64),
}

/// Draws agent answers for one question.
#[derive(Debug, Clone)]
pub struct ResponseSampler {
    agent: CategoricalOutcome,
    mode: BewilderedMode,
    next_other: u64,
}

impl ResponseSampler {
    pub fn new(profile: &QuestionProfile, mode: BewilderedMode) -> Result<Self> {
        if mode == BewilderedMode::FinitePool(0) {
            return Err(Error::InvalidArgument(
                "residual answer pool must hold at least one answer".into(),
            ));
        }
        Ok(Self {
            agent: profile.single_agent(),
            mode,
            next_other: 0,
        })
    }

    pub fn mode(&self) -> BewilderedMode {
        self.mode
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> ResponseLabel {
        let u: f64 = rng.gen();
        if u < self.agent.p_correct {
            ResponseLabel::Correct
        } else if u < self.agent.p_correct + self.agent.p_specious {
            ResponseLabel::Specious
        } else if self.agent.p_other == 0.0 {
            // Rounding left a sliver above p_correct + p_specious.
            if self.agent.p_specious > 0.0 {
                ResponseLabel::Specious
            } else {
                ResponseLabel::Correct
            }
        } else {
            match self.mode {
                BewilderedMode::Unique => {
                    let id = self.next_other;
                    self.next_other += 1;
                    ResponseLabel::Other(id)
                }
                BewilderedMode::FinitePool(m) => ResponseLabel::Other(rng.gen_range(0..m)),
            }
        }
    }
}

/// Vote counts of one ensemble.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteTally {
    x_c: usize,
    x_i: usize,
    others: BTreeMap<u64, usize>,
    pooled: bool,
}

impl VoteTally {
    pub fn new(mode: BewilderedMode) -> Self {
        Self {
            x_c: 0,
            x_i: 0,
            others: BTreeMap::new(),
            pooled: matches!(mode, BewilderedMode::FinitePool(_)),
        }
    }

    pub fn from_labels<I: IntoIterator<Item = ResponseLabel>>(labels: I, mode: BewilderedMode) -> Self {
        let mut tally = Self::new(mode);
        for label in labels {
            tally.add(label);
        }
        tally
    }

    pub fn add(&mut self, label: ResponseLabel) {
        match label {
            ResponseLabel::Correct => self.x_c += 1,
            ResponseLabel::Specious => self.x_i += 1,
            ResponseLabel::Other(id) => *self.others.entry(id).or_default() += 1,
        }
    }

    pub fn x_c(&self) -> usize {
        self.x_c
    }

    pub fn x_i(&self) -> usize {
        self.x_i
    }

    pub fn total(&self) -> usize {
        self.x_c + self.x_i + self.others.values().sum::<usize>()
    }

    pub fn counts(&self) -> BTreeMap<ResponseLabel, usize> {
        let mut counts = BTreeMap::new();
        if self.x_c > 0 {
            counts.insert(ResponseLabel::Correct, self.x_c);
        }
        if self.x_i > 0 {
            counts.insert(ResponseLabel::Specious, self.x_i);
        }
        for (&id, &c) in &self.others {
            counts.insert(ResponseLabel::Other(id), c);
        }
        counts
    }

    /// Residual labels sharing the highest residual count, with that count.
    fn top_others(&self) -> (usize, Vec<u64>) {
        let top = self.others.values().copied().max().unwrap_or(0);
        let ids = self
            .others
            .iter()
            .filter(|(_, &c)| c == top)
            .map(|(&id, _)| id)
            .collect();
        (top, ids)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    ConsensusCorrect,
    ConsensusIncorrect,
    /// A consensus reached without ground truth to judge it.
    ConsensusUnlabeled,
    NoConsensus,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::ConsensusCorrect => "consensus_correct",
            Outcome::ConsensusIncorrect => "consensus_incorrect",
            Outcome::ConsensusUnlabeled => "consensus",
            Outcome::NoConsensus => "no_consensus",
        }
    }

    pub fn is_consensus(&self) -> bool {
        !matches!(self, Outcome::NoConsensus)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DecisionReason {
    ThresholdMet,
    BelowThreshold,
    Tie,
    /// A tie at or above the threshold resolved by the tie policy.
    TieBroken,
}

impl DecisionReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            DecisionReason::ThresholdMet => "threshold_met",
            DecisionReason::BelowThreshold => "below_threshold",
            DecisionReason::Tie => "tie",
            DecisionReason::TieBroken => "tie_broken",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsensusDecision<L> {
    pub outcome: Outcome,
    pub winning_label: Option<L>,
    pub reason: DecisionReason,
}

impl<L> ConsensusDecision<L> {
    pub(crate) fn none(reason: DecisionReason) -> Self {
        Self {
            outcome: Outcome::NoConsensus,
            winning_label: None,
            reason,
        }
    }
}

/// Applies the threshold rule to a simulated tally.
///
/// `C` wins when `x_c >= k` and `x_c > x_i`, `I` symmetrically; equal counts
/// at or above `k` are a tie. In finite-pool mode a residual answer wins (as
/// an incorrect consensus) when it reaches `k` and strictly beats both `x_c`
/// and `x_i`. Under [`TiePolicy::RandomAmongTied`] a tie is settled by a
/// uniform draw from `rng`; [`TiePolicy::ExtendUntilBroken`] needs fresh
/// agents and is reported here as a plain tie.
pub fn tally_and_decide<R: Rng + ?Sized>(
    tally: &VoteTally,
    rule: &VotingRule,
    rng: &mut R,
) -> Result<ConsensusDecision<ResponseLabel>> {
    let total = tally.total();
    if total != rule.n() {
        return Err(Error::TallySizeMismatch {
            expected: rule.n(),
            found: total,
        });
    }
    Ok(decide(tally, rule.k(), rule.tie_policy(), rng))
}

fn decide<R: Rng + ?Sized>(
    tally: &VoteTally,
    k: usize,
    policy: TiePolicy,
    rng: &mut R,
) -> ConsensusDecision<ResponseLabel> {
    let (x_c, x_i) = (tally.x_c, tally.x_i);
    let consensus = |label: ResponseLabel, reason| ConsensusDecision {
        outcome: if label == ResponseLabel::Correct {
            Outcome::ConsensusCorrect
        } else {
            Outcome::ConsensusIncorrect
        },
        winning_label: Some(label),
        reason,
    };
    let settle = |tied: Vec<ResponseLabel>, rng: &mut R| match policy {
        TiePolicy::RandomAmongTied => {
            let pick = tied[rng.gen_range(0..tied.len())];
            consensus(pick, DecisionReason::TieBroken)
        }
        TiePolicy::NoConsensusOnTie | TiePolicy::ExtendUntilBroken => {
            ConsensusDecision::none(DecisionReason::Tie)
        }
    };

    if tally.pooled {
        let (top, ids) = tally.top_others();
        if top >= k && top > x_c && top > x_i {
            if ids.len() == 1 {
                return consensus(ResponseLabel::Other(ids[0]), DecisionReason::ThresholdMet);
            }
            return settle(ids.into_iter().map(ResponseLabel::Other).collect(), rng);
        }
    }
    if x_c >= k && x_c > x_i {
        consensus(ResponseLabel::Correct, DecisionReason::ThresholdMet)
    } else if x_i >= k && x_i > x_c {
        consensus(ResponseLabel::Specious, DecisionReason::ThresholdMet)
    } else if x_c >= k && x_c == x_i {
        settle(vec![ResponseLabel::Correct, ResponseLabel::Specious], rng)
    } else {
        ConsensusDecision::none(DecisionReason::BelowThreshold)
    }
}

/// Seed of trial `trial` under master seed `master`:
/// `splitmix64(master + splitmix64(trial + 0x9E3779B97F4A7C15))`, with
/// wrapping arithmetic.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    splitmix64(master.wrapping_add(splitmix64(trial.wrapping_add(GOLDEN_GAMMA))))
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Monte Carlo estimate of an ensemble's outcome distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub trials: u64,
    pub empirical: OutcomeDistribution,
    /// Binomial standard errors of the three empirical components.
    pub standard_errors: [f64; 3],
    pub seed: u64,
    /// Consensus reached on a residual answer (finite-pool mode only); these
    /// are included in the incorrect-consensus share.
    pub residual_consensus: u64,
    /// Ties settled by the tie policy.
    pub ties_broken: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct SimulationOptions {
    pub trials: u64,
    pub seed: u64,
    pub mode: BewilderedMode,
}

pub fn simulate_ensemble(
    profile: &QuestionProfile,
    rule: &VotingRule,
    trials: u64,
    seed: u64,
) -> Result<SimulationResult> {
    simulate_with(
        profile,
        rule,
        &SimulationOptions {
            trials,
            seed,
            mode: BewilderedMode::Unique,
        },
    )
}

#[derive(Debug, Default, Clone, Copy)]
struct Counts {
    correct: u64,
    incorrect: u64,
    none: u64,
    residual: u64,
    broken: u64,
}

impl Counts {
    fn merge(self, o: Counts) -> Counts {
        Counts {
            correct: self.correct + o.correct,
            incorrect: self.incorrect + o.incorrect,
            none: self.none + o.none,
            residual: self.residual + o.residual,
            broken: self.broken + o.broken,
        }
    }
}

const CHUNK: u64 = 4096;

pub fn simulate_with(
    profile: &QuestionProfile,
    rule: &VotingRule,
    options: &SimulationOptions,
) -> Result<SimulationResult> {
    if options.trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    // Validates the mode before any work starts.
    ResponseSampler::new(profile, options.mode)?;

    let chunks = options.trials.div_ceil(CHUNK);
    let run_chunk = |chunk: u64| {
        let start = chunk * CHUNK;
        let end = (start + CHUNK).min(options.trials);
        (start..end)
            .map(|t| run_trial(profile, rule, options, t))
            .fold(Counts::default(), Counts::merge)
    };

    #[cfg(feature = "native")]
    let counts = {
        use rayon::prelude::*;
        (0..chunks)
            .into_par_iter()
            .map(run_chunk)
            .reduce(Counts::default, Counts::merge)
    };
    #[cfg(not(feature = "native"))]
    let counts = (0..chunks).map(run_chunk).fold(Counts::default(), Counts::merge);

    let trials = options.trials as f64;
    let empirical = OutcomeDistribution {
        p_c: counts.correct as f64 / trials,
        p_i: counts.incorrect as f64 / trials,
        p_nc: counts.none as f64 / trials,
    };
    let se = |p: f64| (p * (1.0 - p) / trials).sqrt();
    Ok(SimulationResult {
        trials: options.trials,
        empirical,
        standard_errors: [se(empirical.p_c), se(empirical.p_i), se(empirical.p_nc)],
        seed: options.seed,
        residual_consensus: counts.residual,
        ties_broken: counts.broken,
    })
}

fn run_trial(
    profile: &QuestionProfile,
    rule: &VotingRule,
    options: &SimulationOptions,
    trial: u64,
) -> Counts {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(options.seed, trial));
    let mut sampler = ResponseSampler::new(profile, options.mode).expect("validated mode");
    let mut tally = VoteTally::new(options.mode);
    for _ in 0..rule.n() {
        tally.add(sampler.sample(&mut rng));
    }
    let mut decision = decide(&tally, rule.k(), rule.tie_policy(), &mut rng);

    if rule.tie_policy() == TiePolicy::ExtendUntilBroken && decision.reason == DecisionReason::Tie {
        for _ in 0..EXTENSION_FACTOR * rule.n() {
            tally.add(sampler.sample(&mut rng));
            decision = decide(&tally, rule.k(), rule.tie_policy(), &mut rng);
            if decision.reason != DecisionReason::Tie {
                if decision.outcome.is_consensus() {
                    decision.reason = DecisionReason::TieBroken;
                }
                break;
            }
        }
    }

    let mut counts = Counts::default();
    match decision.outcome {
        Outcome::ConsensusCorrect => counts.correct = 1,
        Outcome::ConsensusIncorrect | Outcome::ConsensusUnlabeled => counts.incorrect = 1,
        Outcome::NoConsensus => counts.none = 1,
    }
    if matches!(decision.winning_label, Some(ResponseLabel::Other(_))) {
        counts.residual = 1;
    }
    if decision.reason == DecisionReason::TieBroken {
        counts.broken = 1;
    }
    counts
}

/// Exact `k = 1` outcome distribution at one ensemble size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergencePoint {
    pub n: usize,
    pub outcome: OutcomeDistribution,
}

/// Plurality-voting (`k = 1`) outcomes for each ensemble size, computed
/// exactly.
pub fn convergence_study(profile: &QuestionProfile, sizes: &[usize]) -> Result<Vec<ConvergencePoint>> {
    if sizes.is_empty() {
        return Err(Error::Empty("ensemble size list"));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "ensemble sizes must be strictly ascending".into(),
        ));
    }
    sizes
        .iter()
        .map(|&n| {
            let outcome = ConsensusMasses::new(profile, n)?.at_threshold(1)?;
            Ok(ConvergencePoint { n, outcome })
        })
        .collect()
}

pub fn write_convergence_csv<W: Write>(
    out: W,
    profile: &QuestionProfile,
    points: &[ConvergencePoint],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CONVERGENCE_CSV_HEADER)?;
    for p in points {
        w.write_record([
            p.n.to_string(),
            sig12(profile.delta()),
            sig12(profile.eta()),
            sig12(p.outcome.p_c),
            sig12(p.outcome.p_i),
            sig12(p.outcome.p_nc),
        ])?;
    }
    w.flush().map_err(|e| Error::io("writing convergence csv", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::outcome::exact_outcome_distribution;

    fn profile(delta: f64, eta: f64) -> QuestionProfile {
        QuestionProfile::new(delta, eta).unwrap()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn tally(c: usize, i: usize, others: &[usize], mode: BewilderedMode) -> VoteTally {
        let mut t = VoteTally::new(mode);
        (0..c).for_each(|_| t.add(ResponseLabel::Correct));
        (0..i).for_each(|_| t.add(ResponseLabel::Specious));
        for (id, &count) in others.iter().enumerate() {
            (0..count).for_each(|_| t.add(ResponseLabel::Other(id as u64)));
        }
        t
    }

    #[test]
    fn sampler_degenerate_profiles() {
        let mut r = rng();
        let mut s = ResponseSampler::new(&profile(0.0, 0.0), BewilderedMode::Unique).unwrap();
        assert!((0..1000).all(|_| s.sample(&mut r) == ResponseLabel::Correct));
        let mut s = ResponseSampler::new(&profile(0.7, 1.0), BewilderedMode::Unique).unwrap();
        assert!((0..1000).all(|_| matches!(s.sample(&mut r), ResponseLabel::Other(_))));
        let mut s = ResponseSampler::new(&profile(1.0, 0.0), BewilderedMode::Unique).unwrap();
        assert!((0..1000).all(|_| s.sample(&mut r) == ResponseLabel::Specious));
    }

    #[test]
    fn sampler_frequencies_within_three_standard_errors() {
        let draws = 100_000;
        let mut r = rng();
        let mut s = ResponseSampler::new(&profile(0.3, 0.2), BewilderedMode::Unique).unwrap();
        let mut counts = [0usize; 3];
        let mut seen = std::collections::HashSet::new();
        for _ in 0..draws {
            match s.sample(&mut r) {
                ResponseLabel::Correct => counts[0] += 1,
                ResponseLabel::Specious => counts[1] += 1,
                ResponseLabel::Other(id) => {
                    assert!(seen.insert(id), "residual ids repeat");
                    counts[2] += 1;
                }
            }
        }
        for (count, p) in counts.iter().zip([0.56, 0.24, 0.20]) {
            let freq = *count as f64 / draws as f64;
            let bound = 3.0 * (p * (1.0 - p) / draws as f64).sqrt();
            assert!((freq - p).abs() <= bound, "freq {freq} vs {p}");
        }
    }

    #[test]
    fn finite_pool_rejects_empty_pool() {
        assert!(ResponseSampler::new(&profile(0.1, 0.1), BewilderedMode::FinitePool(0)).is_err());
    }

    #[test]
    fn decision_examples() {
        let mut r = rng();
        let unique = BewilderedMode::Unique;
        let d = tally_and_decide(&tally(3, 1, &[], unique), &VotingRule::new(4, 2).unwrap(), &mut r)
            .unwrap();
        assert_eq!(d.outcome, Outcome::ConsensusCorrect);
        assert_eq!(d.reason, DecisionReason::ThresholdMet);
        assert_eq!(d.winning_label, Some(ResponseLabel::Correct));

        let d = tally_and_decide(&tally(2, 2, &[], unique), &VotingRule::new(4, 2).unwrap(), &mut r)
            .unwrap();
        assert_eq!((d.outcome, d.reason), (Outcome::NoConsensus, DecisionReason::Tie));
        assert_eq!(d.winning_label, None);

        let d = tally_and_decide(&tally(1, 1, &[1], unique), &VotingRule::new(3, 2).unwrap(), &mut r)
            .unwrap();
        assert_eq!((d.outcome, d.reason), (Outcome::NoConsensus, DecisionReason::BelowThreshold));

        let err = tally_and_decide(&tally(1, 1, &[], unique), &VotingRule::new(3, 2).unwrap(), &mut r);
        assert!(matches!(err, Err(Error::TallySizeMismatch { expected: 3, found: 2 })));
    }

    #[test]
    fn residual_answers_never_win_in_unique_mode() {
        let mut r = rng();
        let t = tally(0, 0, &[1], BewilderedMode::Unique);
        let d = tally_and_decide(&t, &VotingRule::new(1, 1).unwrap(), &mut r).unwrap();
        assert_eq!(d.outcome, Outcome::NoConsensus);
        // A lone correct vote beats scattered residual votes at k = 1.
        let t = tally(1, 0, &[1, 1], BewilderedMode::Unique);
        let d = tally_and_decide(&t, &VotingRule::new(3, 1).unwrap(), &mut r).unwrap();
        assert_eq!(d.outcome, Outcome::ConsensusCorrect);
    }

    #[test]
    fn pooled_residual_consensus_is_incorrect() {
        let mut r = rng();
        let pool = BewilderedMode::FinitePool(3);
        let t = tally(1, 1, &[0, 3], pool);
        let d = tally_and_decide(&t, &VotingRule::new(5, 3).unwrap(), &mut r).unwrap();
        assert_eq!(d.outcome, Outcome::ConsensusIncorrect);
        assert_eq!(d.winning_label, Some(ResponseLabel::Other(1)));
        // Below the threshold it cannot win.
        let d = tally_and_decide(&t, &VotingRule::new(5, 4).unwrap(), &mut r).unwrap();
        assert_eq!(d.outcome, Outcome::NoConsensus);
    }

    #[test]
    fn random_tie_break_picks_both_sides() {
        let mut r = rng();
        let rule = VotingRule::new(4, 2)
            .unwrap()
            .with_tie_policy(TiePolicy::RandomAmongTied);
        let t = tally(2, 2, &[], BewilderedMode::Unique);
        let mut wins = [0; 2];
        for _ in 0..2000 {
            let d = tally_and_decide(&t, &rule, &mut r).unwrap();
            assert_eq!(d.reason, DecisionReason::TieBroken);
            match d.outcome {
                Outcome::ConsensusCorrect => wins[0] += 1,
                Outcome::ConsensusIncorrect => wins[1] += 1,
                other => panic!("unexpected {other:?}"),
            }
        }
        assert!(wins[0] > 900 && wins[1] > 900, "{wins:?}");
        // Ties below the threshold stay below the threshold.
        let low = tally(1, 1, &[1, 1], BewilderedMode::Unique);
        let d = tally_and_decide(&low, &rule, &mut r).unwrap();
        assert_eq!(d.reason, DecisionReason::BelowThreshold);
    }

    #[test]
    fn trial_seeds_are_distinct_and_stable() {
        assert_eq!(trial_seed(42, 0), trial_seed(42, 0));
        assert_ne!(trial_seed(42, 0), trial_seed(42, 1));
        assert_ne!(trial_seed(42, 0), trial_seed(43, 0));
        let seeds: std::collections::HashSet<_> = (0..10_000).map(|t| trial_seed(1, t)).collect();
        assert_eq!(seeds.len(), 10_000);
    }

    #[test]
    fn perfect_agents_always_agree() {
        for (n, k) in [(1, 1), (5, 3), (9, 9)] {
            let rule = VotingRule::new(n, k).unwrap();
            let res = simulate_ensemble(&profile(0.0, 0.0), &rule, 500, 99).unwrap();
            assert_eq!(res.empirical.components(), [1.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let rule = VotingRule::new(7, 3).unwrap();
        let a = simulate_ensemble(&profile(0.3, 0.4), &rule, 10_000, 5).unwrap();
        let b = simulate_ensemble(&profile(0.3, 0.4), &rule, 10_000, 5).unwrap();
        assert_eq!(a, b);
        let c = simulate_ensemble(&profile(0.3, 0.4), &rule, 10_000, 6).unwrap();
        assert_ne!(a.empirical, c.empirical);
        assert!(simulate_ensemble(&profile(0.3, 0.4), &rule, 0, 5).is_err());
    }

    #[test]
    fn odd_even_split_never_abstains() {
        let rule = VotingRule::new(9, 1).unwrap();
        let res = simulate_ensemble(&profile(0.5, 0.0), &rule, 20_000, 3).unwrap();
        assert_eq!(res.empirical.p_nc, 0.0);
    }

    #[test]
    fn agrees_with_exact_engine() {
        let p = profile(0.3, 0.2);
        for (n, k) in [(5, 1), (6, 3), (10, 4)] {
            let rule = VotingRule::new(n, k).unwrap();
            let exact = exact_outcome_distribution(&p, &rule);
            let trials = 100_000;
            let sim = simulate_ensemble(&p, &rule, trials, 11).unwrap();
            for (e, s) in exact.components().iter().zip(sim.empirical.components()) {
                let se = (e * (1.0 - e) / trials as f64).sqrt();
                assert!((e - s).abs() <= 4.0 * se + 1e-12, "n={n} k={k}: {e} vs {s}");
            }
        }
    }

    #[test]
    fn tie_policies_only_move_ties() {
        let p = profile(0.45, 0.1);
        let base = VotingRule::new(10, 2).unwrap();
        let exact = exact_outcome_distribution(&p, &base);
        let trials = 50_000;
        let none = simulate_ensemble(&p, &base, trials, 8).unwrap();
        let random = simulate_ensemble(&p, &base.with_tie_policy(TiePolicy::RandomAmongTied), trials, 8)
            .unwrap();
        let extend = simulate_ensemble(&p, &base.with_tie_policy(TiePolicy::ExtendUntilBroken), trials, 8)
            .unwrap();
        assert_eq!(none.ties_broken, 0);
        assert!(random.ties_broken > 0 && extend.ties_broken > 0);
        // Same seed, same draws: breaking ties only moves mass out of abstention.
        assert!(random.empirical.p_nc < none.empirical.p_nc);
        assert!(extend.empirical.p_nc < none.empirical.p_nc);
        assert!(random.empirical.p_c >= none.empirical.p_c);
        assert!(extend.empirical.p_c >= none.empirical.p_c);
        let se = (exact.p_nc * (1.0 - exact.p_nc) / trials as f64).sqrt();
        assert!((none.empirical.p_nc - exact.p_nc).abs() < 4.0 * se);
    }

    #[test]
    fn finite_pool_can_form_residual_consensus() {
        let p = profile(0.1, 0.9);
        let rule = VotingRule::new(9, 3).unwrap();
        let opts = SimulationOptions {
            trials: 5_000,
            seed: 2,
            mode: BewilderedMode::FinitePool(2),
        };
        let pooled = simulate_with(&p, &rule, &opts).unwrap();
        assert!(pooled.residual_consensus > 0);
        assert!(pooled.empirical.p_i >= pooled.residual_consensus as f64 / 5_000.0);
        let unique = simulate_ensemble(&p, &rule, 5_000, 2).unwrap();
        assert_eq!(unique.residual_consensus, 0);
    }

    #[test]
    fn convergence_examples() {
        let series = convergence_study(&profile(0.4, 0.2), &[11, 51, 101]).unwrap();
        assert!(series.windows(2).all(|w| w[1].outcome.p_nc < w[0].outcome.p_nc));
        let big = convergence_study(&profile(0.4, 0.2), &[501]).unwrap();
        assert!(big[0].outcome.p_c >= 0.99);
        let mirrored = convergence_study(&profile(0.6, 0.2), &[501]).unwrap();
        assert!(mirrored[0].outcome.p_c <= 0.01 && mirrored[0].outcome.p_i >= 0.99);
        assert!(convergence_study(&profile(0.4, 0.2), &[]).is_err());
        assert!(convergence_study(&profile(0.4, 0.2), &[5, 3]).is_err());
    }

    #[test]
    fn convergence_csv_layout() {
        let p = profile(0.4, 0.2);
        let series = convergence_study(&p, &[1, 3]).unwrap();
        let mut buf = Vec::new();
        write_convergence_csv(&mut buf, &p, &series).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("n,delta,eta,p_c,p_i,p_nc"));
        assert_eq!(lines.next(), Some("1,0.4,0.2,0.48,0.32,0.2"));
    }
}
