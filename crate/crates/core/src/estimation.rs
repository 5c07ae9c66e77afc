//! Recovering question parameters from recorded answers, and checking how well
//! the recovered parameters predict ensemble behavior.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::format::sig12;
use crate::outcome::{exact_outcome_distribution, OutcomeDistribution, QuestionProfile, VotingRule};

pub const ESTIMATE_CSV_HEADER: [&str; 6] = [
    "question_id",
    "n_samples",
    "delta_hat",
    "eta_hat",
    "d_hat",
    "dominant_incorrect",
];

/// Parameters estimated from one question's answers.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileEstimate {
    pub delta_hat: f64,
    pub eta_hat: f64,
    /// Fraction of answers that are wrong.
    pub d_hat: f64,
    pub sample_count: usize,
    /// Most frequent wrong answer, ties going to the lexicographically
    /// smallest label.
    pub dominant_incorrect: Option<String>,
    /// Set when no answer was either correct or the dominant wrong answer,
    /// leaving `delta_hat` at its fallback of 0.
    pub delta_undetermined: bool,
}

impl ProfileEstimate {
    pub fn profile(&self) -> Result<QuestionProfile> {
        QuestionProfile::new(self.delta_hat, self.eta_hat)
    }
}

fn count_labels<S: AsRef<str>>(responses: &[S]) -> BTreeMap<&str, usize> {
    let mut counts = BTreeMap::new();
    for r in responses {
        *counts.entry(r.as_ref()).or_default() += 1;
    }
    counts
}

/// First label (in lexicographic order) with the highest count.
fn modal<'a, I: Iterator<Item = (&'a str, usize)>>(iter: I) -> Option<(&'a str, usize)> {
    iter.fold(None, |best, (label, count)| match best {
        Some((_, c)) if c >= count => best,
        _ => Some((label, count)),
    })
}

/// Estimates `(delta, eta, d)` for one question.
///
/// `eta_hat` is the share of answers that are neither the truth nor the
/// dominant wrong answer; `delta_hat` is the dominant wrong answer's share of
/// the answers that are either.
pub fn estimate_profile<S: AsRef<str>>(responses: &[S], truth: &str) -> Result<ProfileEstimate> {
    if responses.is_empty() {
        return Err(Error::Empty("response list"));
    }
    let total = responses.len();
    let counts = count_labels(responses);
    let correct = counts.get(truth).copied().unwrap_or(0);
    let dominant = modal(
        counts
            .iter()
            .filter(|(label, _)| **label != truth)
            .map(|(label, c)| (*label, *c)),
    );
    let dominant_count = dominant.map_or(0, |(_, c)| c);

    let focused = correct + dominant_count;
    let delta_undetermined = focused == 0;
    let delta_hat = if delta_undetermined {
        0.0
    } else {
        dominant_count as f64 / focused as f64
    };
    Ok(ProfileEstimate {
        delta_hat,
        eta_hat: (total - focused) as f64 / total as f64,
        d_hat: (total - correct) as f64 / total as f64,
        sample_count: total,
        dominant_incorrect: dominant.map(|(label, _)| label.to_string()),
        delta_undetermined,
    })
}

/// How concentrated unlabeled answers are.
#[derive(Debug, Clone, PartialEq)]
pub struct Concentration {
    pub modal_label: String,
    pub modal_fraction: f64,
    pub runner_up_label: Option<String>,
    pub runner_up_fraction: f64,
}

pub fn estimate_concentration<S: AsRef<str>>(responses: &[S]) -> Result<Concentration> {
    if responses.is_empty() {
        return Err(Error::Empty("response list"));
    }
    let total = responses.len() as f64;
    let counts = count_labels(responses);
    let (modal_label, modal_count) =
        modal(counts.iter().map(|(l, c)| (*l, *c))).expect("non-empty responses");
    let runner_up = modal(
        counts
            .iter()
            .filter(|(l, _)| **l != modal_label)
            .map(|(l, c)| (*l, *c)),
    );
    Ok(Concentration {
        modal_label: modal_label.to_string(),
        modal_fraction: modal_count as f64 / total,
        runner_up_label: runner_up.map(|(l, _)| l.to_string()),
        runner_up_fraction: runner_up.map_or(0.0, |(_, c)| c as f64 / total),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionComparison {
    pub predicted: OutcomeDistribution,
    pub observed: OutcomeDistribution,
    pub component_abs_errors: [f64; 3],
}

/// Predicts the ensemble outcome from an estimate and compares it with an
/// observed outcome distribution.
pub fn predict_vs_observe(
    estimate: &ProfileEstimate,
    rule: &VotingRule,
    observed: &OutcomeDistribution,
) -> Result<PredictionComparison> {
    let predicted = exact_outcome_distribution(&estimate.profile()?, rule);
    let p = predicted.components();
    let o = observed.components();
    Ok(PredictionComparison {
        predicted,
        observed: *observed,
        component_abs_errors: [(p[0] - o[0]).abs(), (p[1] - o[1]).abs(), (p[2] - o[2]).abs()],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchComparison {
    pub comparisons: Vec<PredictionComparison>,
    /// Pearson correlation of predicted against observed, per component
    /// `(p_c, p_i, p_nc)`; `None` when either side has no spread.
    pub correlation: [Option<f64>; 3],
}

pub fn predict_vs_observe_batch(
    items: &[(ProfileEstimate, OutcomeDistribution)],
    rule: &VotingRule,
) -> Result<BatchComparison> {
    let comparisons = items
        .iter()
        .map(|(est, obs)| predict_vs_observe(est, rule, obs))
        .collect::<Result<Vec<_>>>()?;
    let component = |j: usize| {
        let xs: Vec<f64> = comparisons.iter().map(|c| c.predicted.components()[j]).collect();
        let ys: Vec<f64> = comparisons.iter().map(|c| c.observed.components()[j]).collect();
        pearson(&xs, &ys)
    };
    Ok(BatchComparison {
        correlation: [component(0), component(1), component(2)],
        comparisons,
    })
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn write_estimate_csv<W: Write>(out: W, rows: &[(String, ProfileEstimate)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ESTIMATE_CSV_HEADER)?;
    for (question_id, e) in rows {
        w.write_record([
            question_id.clone(),
            e.sample_count.to_string(),
            sig12(e.delta_hat),
            sig12(e.eta_hat),
            sig12(e.d_hat),
            e.dominant_incorrect.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("writing estimate csv", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{ResponseLabel, ResponseSampler, BewilderedMode};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn answers(spec: &[(&str, usize)]) -> Vec<String> {
        spec.iter()
            .flat_map(|(label, count)| std::iter::repeat_n(label.to_string(), *count))
            .collect()
    }

    fn synthetic(delta: f64, eta: f64, count: usize, seed: u64) -> Vec<String> {
        let p = QuestionProfile::new(delta, eta).unwrap();
        let mut sampler = ResponseSampler::new(&p, BewilderedMode::Unique).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| match sampler.sample(&mut rng) {
                ResponseLabel::Correct => "right".to_string(),
                ResponseLabel::Specious => "trap".to_string(),
                ResponseLabel::Other(id) => format!("other-{id}"),
            })
            .collect()
    }

    #[test]
    fn all_correct() {
        let e = estimate_profile(&answers(&[("42", 10)]), "42").unwrap();
        assert_eq!((e.delta_hat, e.eta_hat, e.d_hat), (0.0, 0.0, 0.0));
        assert_eq!(e.dominant_incorrect, None);
        assert_eq!(e.sample_count, 10);
        assert!(!e.delta_undetermined);
    }

    #[test]
    fn mixed_answers() {
        let e = estimate_profile(&answers(&[("T", 6), ("X", 3), ("Y", 1)]), "T").unwrap();
        assert!((e.delta_hat - 3.0 / 9.0).abs() < 1e-15);
        assert!((e.eta_hat - 0.1).abs() < 1e-15);
        assert!((e.d_hat - 0.4).abs() < 1e-15);
        assert_eq!(e.dominant_incorrect.as_deref(), Some("X"));
    }

    #[test]
    fn no_correct_answers_with_tied_wrong_modes() {
        let e = estimate_profile(&answers(&[("Y", 5), ("X", 5)]), "Z").unwrap();
        assert_eq!(e.dominant_incorrect.as_deref(), Some("X"));
        assert_eq!((e.delta_hat, e.eta_hat, e.d_hat), (1.0, 0.5, 1.0));
    }

    #[test]
    fn only_one_wrong_answer_is_dominant_even_when_all_unique() {
        let e = estimate_profile(&answers(&[("a", 1), ("b", 1), ("c", 1)]), "z").unwrap();
        assert_eq!(e.dominant_incorrect.as_deref(), Some("a"));
        assert!((e.delta_hat - 1.0).abs() < 1e-15);
        assert!(estimate_profile::<&str>(&[], "z").is_err());
    }

    #[test]
    fn concentration_examples() {
        let c = estimate_concentration(&["a", "a", "a"]).unwrap();
        assert_eq!((c.modal_label.as_str(), c.modal_fraction), ("a", 1.0));
        assert_eq!((c.runner_up_label, c.runner_up_fraction), (None, 0.0));

        let c = estimate_concentration(&["a", "a", "b"]).unwrap();
        assert!((c.modal_fraction - 2.0 / 3.0).abs() < 1e-15);
        assert!((c.runner_up_fraction - 1.0 / 3.0).abs() < 1e-15);

        let c = estimate_concentration(&["a", "b", "c", "a", "b"]).unwrap();
        assert_eq!(c.modal_label, "a");
        assert_eq!(c.runner_up_label.as_deref(), Some("b"));
        assert_eq!((c.modal_fraction, c.runner_up_fraction), (0.4, 0.4));
        assert!(estimate_concentration::<&str>(&[]).is_err());
    }

    #[test]
    fn exact_observation_has_zero_error() {
        let e = estimate_profile(&answers(&[("T", 6), ("X", 3), ("Y", 1)]), "T").unwrap();
        let rule = VotingRule::new(5, 3).unwrap();
        let observed = exact_outcome_distribution(&e.profile().unwrap(), &rule);
        let cmp = predict_vs_observe(&e, &rule, &observed).unwrap();
        assert_eq!(cmp.component_abs_errors, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn large_samples_predict_simulated_ensembles() {
        let rule = VotingRule::new(7, 3).unwrap();
        for (delta, eta) in [(0.2, 0.3), (0.45, 0.1), (0.7, 0.5)] {
            let data = synthetic(delta, eta, 100_000, 17);
            let e = estimate_profile(&data, "right").unwrap();
            let truth = QuestionProfile::new(delta, eta).unwrap();
            let observed = crate::simulator::simulate_ensemble(&truth, &rule, 100_000, 23)
                .unwrap()
                .empirical;
            let cmp = predict_vs_observe(&e, &rule, &observed).unwrap();
            assert!(cmp.component_abs_errors.iter().all(|&x| x <= 0.02), "{cmp:?}");
        }
    }

    #[test]
    fn estimator_consistency_with_large_samples() {
        // 4 standard errors at the effective sample size for delta_hat.
        let count = 20_000;
        for (j, &(delta, eta)) in [(0.1, 0.1), (0.5, 0.5), (0.9, 0.3), (0.3, 0.9)].iter().enumerate() {
            let e = estimate_profile(&synthetic(delta, eta, count, j as u64), "right").unwrap();
            let focused = count as f64 * (1.0 - eta);
            let se_delta = (delta * (1.0 - delta) / focused).sqrt();
            let se_eta = (eta * (1.0 - eta) / count as f64).sqrt();
            assert!((e.delta_hat - delta).abs() <= 4.0 * se_delta, "{e:?}");
            assert!((e.eta_hat - eta).abs() <= 4.0 * se_eta, "{e:?}");
        }
    }

    #[test]
    fn pearson_basics() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(pearson(&[1.0, 1.0], &[1.0, 2.0]), None);
        assert_eq!(pearson(&[1.0], &[1.0]), None);
    }

    #[test]
    fn estimate_csv_layout() {
        let e = estimate_profile(&answers(&[("T", 6), ("X", 3), ("Y", 1)]), "T").unwrap();
        let mut buf = Vec::new();
        write_estimate_csv(&mut buf, &[("q1".into(), e)]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "question_id,n_samples,delta_hat,eta_hat,d_hat,dominant_incorrect\nq1,10,0.333333333333,0.1,0.4,X\n"
        );
    }

    fn label_strategy() -> impl Strategy<Value = Vec<String>> {
        proptest::collection::vec(prop_oneof!["[a-d]", Just("T".to_string())], 1..60)
    }

    proptest! {
        #[test]
        fn estimate_identities(responses in label_strategy()) {
            let e = estimate_profile(&responses, "T").unwrap();
            let n = responses.len();
            let correct = responses.iter().filter(|r| *r == "T").count();
            let dominant = e.dominant_incorrect.as_ref()
                .map_or(0, |d| responses.iter().filter(|r| *r == d).count());
            prop_assert!((e.eta_hat * n as f64 + (correct + dominant) as f64 - n as f64).abs() < 1e-9);
            prop_assert!((1.0 - e.d_hat - correct as f64 / n as f64).abs() < 1e-15);
            for x in [e.delta_hat, e.eta_hat, e.d_hat] {
                prop_assert!((0.0..=1.0).contains(&x));
            }
        }

        #[test]
        fn estimate_is_permutation_invariant(mut responses in label_strategy(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let before = estimate_profile(&responses, "T").unwrap();
            responses.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(before, estimate_profile(&responses, "T").unwrap());
        }
    }
}
