//! The weak-sampling learner (L0), the helpful teacher (T1) and the
//! pedagogical learner (L1), all over a finite [`RuleSpace`].
//!
//! * L0: `P(r | c) ∝ exp(-|r|) · exp(-β·Q_r(c))`, where `Q_r(c)` counts
//!   examples whose label disagrees with `r`.
//! * T1: `P(c ; r) ∝ [π(c) · P_L0(r | c)]^α` over a finite corpus pool, with
//!   cost prior `π(c) = 2^-|c| · Π 2^-|x_i| · w_i`. `w_i` is 1 for a correctly
//!   labeled example and `η/(1-η)` otherwise, so `η = 0` is a hard
//!   consistency requirement.
//! * L1: `P(r | c) ∝ exp(-|r|) · P_T1(c ; r)`.
//!
//! Everything is computed in log space.

use serde::Serialize;

use crate::corpus::{Corpus, CorpusKey, RuleSpace};
use crate::prob::{exp_all, log_normalize, log_sum_exp};
use crate::regex::Regex;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LearnerError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("every pool corpus has zero teacher-prior score for the taught hypothesis")]
    DegeneratePool,
    #[error("the observed corpus is not in the teacher's pool")]
    PoolMissingCorpus,
    #[error("hypothesis {0} is not in the rule space")]
    NotInSpace(String),
    #[error("recursion depth {0} is not supported (only 0 and 1)")]
    UnsupportedDepth(usize),
}

/// L0 parameters: error tolerance `beta` and teacher label slack `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LearnerParams {
    pub beta: f64,
    pub eta: f64,
}

impl LearnerParams {
    pub fn new(beta: f64, eta: f64) -> Result<Self, LearnerError> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(LearnerError::InvalidParams(format!("beta must be >= 0, got {beta}")));
        }
        if !(0.0..0.5).contains(&eta) {
            return Err(LearnerError::InvalidParams(format!(
                "eta must be in [0, 0.5), got {eta}"
            )));
        }
        Ok(LearnerParams { beta, eta })
    }
}

/// T1 parameters: temperature, the candidate corpus pool, and the L0 it reasons about.
#[derive(Debug, Clone)]
pub struct TeacherParams {
    alpha: f64,
    pool: Vec<Corpus>,
    learner: LearnerParams,
}

impl TeacherParams {
    pub fn new(alpha: f64, pool: Vec<Corpus>, learner: LearnerParams) -> Result<Self, LearnerError> {
        if !(alpha >= 1.0 && alpha.is_finite()) {
            return Err(LearnerError::InvalidParams(format!("alpha must be >= 1, got {alpha}")));
        }
        if pool.is_empty() {
            return Err(LearnerError::InvalidParams("corpus pool is empty".into()));
        }
        let mut keys: Vec<CorpusKey> = pool.iter().map(Corpus::key).collect();
        keys.sort();
        if keys.windows(2).any(|w| w[0] == w[1]) {
            return Err(LearnerError::InvalidParams("corpus pool has duplicates".into()));
        }
        Ok(TeacherParams {
            alpha,
            pool,
            learner,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn pool(&self) -> &[Corpus] {
        &self.pool
    }

    pub fn learner(&self) -> LearnerParams {
        self.learner
    }

    pub fn pool_index(&self, c: &Corpus) -> Option<usize> {
        let key = c.key();
        self.pool.iter().position(|p| p.key() == key)
    }
}

/// A normalized distribution over the hypotheses of a rule space, target first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorDistribution {
    hypotheses: Vec<String>,
    probs: Vec<f64>,
    #[serde(skip)]
    log_probs: Vec<f64>,
}

impl PosteriorDistribution {
    fn from_log(space: &RuleSpace, log_probs: Vec<f64>) -> Self {
        PosteriorDistribution {
            hypotheses: space.hypotheses().map(|h| h.as_str().to_string()).collect(),
            probs: exp_all(&log_probs),
            log_probs,
        }
    }

    pub fn hypotheses(&self) -> &[String] {
        &self.hypotheses
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn prob(&self, index: usize) -> f64 {
        self.probs[index]
    }

    /// Probability of `target`, or `None` if it is not one of the hypotheses.
    pub fn prob_of(&self, target: &Regex) -> Option<f64> {
        self.hypotheses
            .iter()
            .position(|h| h == target.as_str())
            .map(|i| self.probs[i])
    }
}

/// A normalized distribution over a teacher's pool, in pool order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusDistribution {
    probs: Vec<f64>,
    #[serde(skip)]
    log_probs: Vec<f64>,
}

impl CorpusDistribution {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }
}

/// L1 output; when `fallback` is set the posterior is L0's, unchanged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PedagogicalPosterior {
    pub posterior: PosteriorDistribution,
    pub fallback: bool,
}

/// `Q_r(c)`.
pub fn error_count(c: &Corpus, r: &Regex) -> usize {
    c.error_count(r)
}

/// The description-length prior, normalized over `space`.
pub fn prior(space: &RuleSpace) -> PosteriorDistribution {
    let mut logs: Vec<f64> = space
        .description_lengths()
        .iter()
        .map(|&dl| -(dl as f64))
        .collect();
    log_normalize(&mut logs).expect("prior weights are finite");
    PosteriorDistribution::from_log(space, logs)
}

pub fn l0_posterior(space: &RuleSpace, c: &Corpus, params: &LearnerParams) -> PosteriorDistribution {
    let scorer = PoolScorer::new(space, std::slice::from_ref(c));
    PosteriorDistribution::from_log(space, scorer.l0_log(0, params.beta))
}

/// Unnormalized teacher cost prior `π_T1(c)` for teaching `r`.
pub fn teacher_prior_score(c: &Corpus, r: &Regex, eta: f64) -> f64 {
    let ratio = eta / (1.0 - eta);
    let errors = error_count(c, r) as i32;
    0.5f64.powi(c.cost() as i32) * ratio.powi(errors)
}

/// `ln π_T1(c)`; `-inf` where the score is zero.
pub fn teacher_prior_log_score(c: &Corpus, r: &Regex, eta: f64) -> f64 {
    log_teacher_prior(c.cost(), error_count(c, r), eta)
}

fn log_teacher_prior(cost: usize, errors: usize, eta: f64) -> f64 {
    let base = -(cost as f64) * std::f64::consts::LN_2;
    if errors == 0 {
        base
    } else if eta == 0.0 {
        f64::NEG_INFINITY
    } else {
        base + errors as f64 * (eta / (1.0 - eta)).ln()
    }
}

/// The teacher's distribution over `tp.pool` when teaching `r`.
pub fn t1_distribution(
    r: &Regex,
    space: &RuleSpace,
    tp: &TeacherParams,
) -> Result<CorpusDistribution, LearnerError> {
    let index = space
        .index_of(r)
        .ok_or_else(|| LearnerError::NotInSpace(r.to_string()))?;
    let scorer = PoolScorer::new(space, &tp.pool);
    let logs = scorer
        .t1_log(index, tp.alpha, &tp.learner)
        .ok_or(LearnerError::DegeneratePool)?;
    Ok(CorpusDistribution {
        probs: exp_all(&logs),
        log_probs: logs,
    })
}

/// L1 posterior for an observed corpus that must be a member of `tp.pool`.
pub fn l1_posterior(
    space: &RuleSpace,
    c: &Corpus,
    tp: &TeacherParams,
) -> Result<PedagogicalPosterior, LearnerError> {
    let observed = tp.pool_index(c).ok_or(LearnerError::PoolMissingCorpus)?;
    let scorer = PoolScorer::new(space, &tp.pool);
    let (logs, fallback) = scorer.l1_log(observed, tp.alpha, &tp.learner);
    Ok(PedagogicalPosterior {
        posterior: PosteriorDistribution::from_log(space, logs),
        fallback,
    })
}

/// Learner at recursion depth 0 (L0) or 1 (L1). Deeper levels are rejected.
pub fn posterior_at_depth(
    space: &RuleSpace,
    c: &Corpus,
    tp: &TeacherParams,
    depth: usize,
) -> Result<PedagogicalPosterior, LearnerError> {
    match depth {
        0 => Ok(PedagogicalPosterior {
            posterior: l0_posterior(space, c, &tp.learner),
            fallback: false,
        }),
        1 => l1_posterior(space, c, tp),
        d => Err(LearnerError::UnsupportedDepth(d)),
    }
}

/// Probability the posterior assigns to `target`.
pub fn prob_correct(p: &PosteriorDistribution, target: &Regex) -> Result<f64, LearnerError> {
    p.prob_of(target)
        .ok_or_else(|| LearnerError::NotInSpace(target.to_string()))
}

/// Match results for one corpus against every hypothesis of a space.
#[derive(Debug, Clone)]
struct Evidence {
    errors: Vec<usize>,
    cost: usize,
}

/// Precomputed matcher results for a space and a corpus pool, so that
/// many parameter settings can be evaluated without re-running the
/// automata.
#[derive(Debug, Clone)]
pub struct PoolScorer {
    neg_dl: Vec<f64>,
    evidence: Vec<Evidence>,
}

impl PoolScorer {
    pub fn new(space: &RuleSpace, pool: &[Corpus]) -> Self {
        let hypotheses: Vec<&Regex> = space.hypotheses().collect();
        let evidence = pool
            .iter()
            .map(|c| Evidence {
                errors: hypotheses.iter().map(|h| c.error_count(h)).collect(),
                cost: c.cost(),
            })
            .collect();
        PoolScorer {
            neg_dl: space
                .description_lengths()
                .iter()
                .map(|&d| -(d as f64))
                .collect(),
            evidence,
        }
    }

    pub fn pool_len(&self) -> usize {
        self.evidence.len()
    }

    pub fn hypothesis_count(&self) -> usize {
        self.neg_dl.len()
    }

    /// `Q` for every hypothesis on pool corpus `corpus`.
    pub fn errors(&self, corpus: usize) -> &[usize] {
        &self.evidence[corpus].errors
    }

    pub fn prior_log(&self) -> Vec<f64> {
        let mut logs = self.neg_dl.clone();
        log_normalize(&mut logs).expect("prior weights are finite");
        logs
    }

    /// Normalized L0 log posterior for pool corpus `corpus`.
    pub fn l0_log(&self, corpus: usize, beta: f64) -> Vec<f64> {
        let errors = &self.evidence[corpus].errors;
        let mut logs: Vec<f64> = self
            .neg_dl
            .iter()
            .zip(errors)
            .map(|(&p, &q)| p - beta * q as f64)
            .collect();
        log_normalize(&mut logs).expect("L0 weights are finite");
        logs
    }

    /// Unnormalized T1 log weights over the pool for hypothesis `index`.
    fn t1_log_weights(&self, index: usize, alpha: f64, learner: &LearnerParams) -> Vec<f64> {
        (0..self.evidence.len())
            .map(|j| {
                let ev = &self.evidence[j];
                let prior = log_teacher_prior(ev.cost, ev.errors[index], learner.eta);
                if prior == f64::NEG_INFINITY {
                    return f64::NEG_INFINITY;
                }
                alpha * (prior + self.l0_log(j, learner.beta)[index])
            })
            .collect()
    }

    /// Normalized T1 log distribution, or `None` if every weight is zero.
    pub fn t1_log(&self, index: usize, alpha: f64, learner: &LearnerParams) -> Option<Vec<f64>> {
        let mut logs = self.t1_log_weights(index, alpha, learner);
        log_normalize(&mut logs)?;
        Some(logs)
    }

    /// L1 log posterior for pool corpus `observed`, and whether it fell back to L0.
    pub fn l1_log(&self, observed: usize, alpha: f64, learner: &LearnerParams) -> (Vec<f64>, bool) {
        // Each pool corpus' L0 posterior is shared by every hypothesis' teacher.
        let l0: Vec<Vec<f64>> = (0..self.evidence.len())
            .map(|j| self.l0_log(j, learner.beta))
            .collect();
        let mut logs: Vec<f64> = (0..self.neg_dl.len())
            .map(|i| {
                let weights: Vec<f64> = self
                    .evidence
                    .iter()
                    .zip(&l0)
                    .map(|(ev, l0_j)| {
                        let prior = log_teacher_prior(ev.cost, ev.errors[i], learner.eta);
                        if prior == f64::NEG_INFINITY {
                            f64::NEG_INFINITY
                        } else {
                            alpha * (prior + l0_j[i])
                        }
                    })
                    .collect();
                let z = log_sum_exp(&weights);
                if z == f64::NEG_INFINITY {
                    // Degenerate teacher: contributes zero likelihood.
                    return f64::NEG_INFINITY;
                }
                self.neg_dl[i] + (weights[observed] - z)
            })
            .collect();
        match log_normalize(&mut logs) {
            Some(()) => (logs, false),
            None => (l0[observed].clone(), true),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{builtin_rule_spaces, Label, Source};
    use crate::prob::entropy;

    use Label::{Negative as N, Positive as P};

    fn corpus(examples: &[(&str, Label)]) -> Corpus {
        Corpus::new("3a", "t", Source::Synthetic, examples.iter().copied()).unwrap()
    }

    fn three_a() -> RuleSpace {
        builtin_rule_spaces().remove("3a").unwrap()
    }

    fn params(beta: f64, eta: f64) -> LearnerParams {
        LearnerParams::new(beta, eta).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1.0)
    }

    #[test]
    fn error_counts() {
        let target = three_a().target().clone();
        assert_eq!(error_count(&corpus(&[("aaa", P)]), &target), 0);
        assert_eq!(error_count(&corpus(&[("aaa", P), ("aa", P)]), &target), 1);
    }

    #[test]
    fn param_validation() {
        assert!(LearnerParams::new(-0.1, 0.0).is_err());
        assert!(LearnerParams::new(1.0, 0.5).is_err());
        assert!(LearnerParams::new(f64::NAN, 0.0).is_err());
        let c = corpus(&[("aaa", P)]);
        assert!(TeacherParams::new(0.5, vec![c.clone()], params(1.0, 0.0)).is_err());
        assert!(TeacherParams::new(1.0, vec![], params(1.0, 0.0)).is_err());
        assert!(TeacherParams::new(1.0, vec![c.clone(), c], params(1.0, 0.0)).is_err());
    }

    #[test]
    fn beta_zero_is_prior() {
        let space = builtin_rule_spaces().remove("suffix-s").unwrap();
        let c = corpus(&[("xyz", P), ("s", N)]);
        let post = l0_posterior(&space, &c, &params(0.0, 0.0));
        assert_eq!(post.log_probs(), prior(&space).log_probs());
        // dl = 4, 6, 6
        let z = (-4f64).exp() + 2.0 * (-6f64).exp();
        assert!(close(post.prob(0), (-4f64).exp() / z));
    }

    #[test]
    fn l0_single_positive() {
        let post = l0_posterior(&three_a(), &corpus(&[("aaaa", P)]), &params(5.0, 0.0));
        let z = 2.0 + (-5f64).exp();
        assert!(close(post.prob(0), 1.0 / z));
        assert!(close(post.prob(1), (-5f64).exp() / z));
        assert!(close(post.prob(2), 1.0 / z));
    }

    #[test]
    fn l0_near_miss_favors_target() {
        let post = l0_posterior(&three_a(), &corpus(&[("aaaa", P), ("aA", N)]), &params(5.0, 0.0));
        let z = 1.0 + 2.0 * (-5f64).exp();
        assert!(close(post.prob(0), 1.0 / z));
        assert!(post.prob(0) > post.prob(1) && post.prob(0) > post.prob(2));
    }

    #[test]
    fn teacher_prior_values() {
        let target = three_a().target().clone();
        assert_eq!(teacher_prior_score(&corpus(&[("aaa", P)]), &target, 0.0), 1.0 / 16.0);
        assert_eq!(teacher_prior_score(&corpus(&[("aa", P)]), &target, 0.0), 0.0);
        assert_eq!(
            teacher_prior_score(&corpus(&[("aaa", P), ("aa", N)]), &target, 0.0),
            1.0 / 128.0
        );
        assert_eq!(
            teacher_prior_log_score(&corpus(&[("aa", P)]), &target, 0.0),
            f64::NEG_INFINITY
        );
        let slack = teacher_prior_score(&corpus(&[("aa", P)]), &target, 0.2);
        assert!(close(slack, 0.125 * 0.25));
    }

    #[test]
    fn t1_single_corpus_pool() {
        let space = three_a();
        let tp = TeacherParams::new(1.0, vec![corpus(&[("aaa", P)])], params(5.0, 0.0)).unwrap();
        let d = t1_distribution(space.target(), &space, &tp).unwrap();
        assert_eq!(d.probs(), [1.0]);
    }

    #[test]
    fn t1_prefers_short_informative_corpus() {
        let space = three_a();
        let pool = vec![corpus(&[("aaa", P)]), corpus(&[("aaaaaa", P)])];
        let e5 = (-5f64).exp();
        // π · P_L0(target | c) for each pool corpus
        let w_short = 2f64.powi(-4) / (2.0 + e5);
        let w_long = 2f64.powi(-7) / 3.0;
        let tp1 = TeacherParams::new(1.0, pool.clone(), params(5.0, 0.0)).unwrap();
        let d1 = t1_distribution(space.target(), &space, &tp1).unwrap();
        assert!(close(d1.probs()[0], w_short / (w_short + w_long)));
        assert!(d1.probs()[0] > d1.probs()[1]);

        let tp2 = TeacherParams::new(2.0, pool, params(5.0, 0.0)).unwrap();
        let d2 = t1_distribution(space.target(), &space, &tp2).unwrap();
        let (s2, l2) = (w_short.powi(2), w_long.powi(2));
        assert!(close(d2.probs()[0], s2 / (s2 + l2)));
        assert!(entropy(d2.probs()) < entropy(d1.probs()));
    }

    #[test]
    fn t1_degenerate_and_foreign_hypothesis() {
        let space = three_a();
        let tp = TeacherParams::new(1.0, vec![corpus(&[("aa", P)])], params(1.0, 0.0)).unwrap();
        assert_eq!(
            t1_distribution(space.target(), &space, &tp),
            Err(LearnerError::DegeneratePool)
        );
        let other = Regex::new("^b$").unwrap();
        assert!(matches!(
            t1_distribution(&other, &space, &tp),
            Err(LearnerError::NotInSpace(_))
        ));
    }

    #[test]
    fn l1_single_corpus_pool_is_prior() {
        // Strict labels need a corpus every hypothesis can teach; with slack any corpus works.
        let cases = [(corpus(&[("!", N)]), 0.0), (corpus(&[("zzz", N), ("aaa", P)]), 0.1)];
        for space in builtin_rule_spaces().values() {
            for (c, eta) in &cases {
                let tp = TeacherParams::new(3.0, vec![c.clone()], params(1.0, *eta)).unwrap();
                let l1 = l1_posterior(space, c, &tp).unwrap();
                assert!(!l1.fallback);
                let p = prior(space);
                for (a, b) in l1.posterior.probs().iter().zip(p.probs()) {
                    assert!(close(*a, *b));
                }
            }
        }
    }

    #[test]
    fn l1_beats_l0_on_helpful_corpus() {
        let space = three_a();
        let c = corpus(&[("aaa", P)]);
        let pool = vec![c.clone(), corpus(&[("aaaaaa", P)]), corpus(&[("aA", P)])];
        let lp = params(5.0, 0.0);
        let tp = TeacherParams::new(1.0, pool, lp).unwrap();
        let l1 = l1_posterior(&space, &c, &tp).unwrap();
        let l0 = l0_posterior(&space, &c, &lp);
        assert!(!l1.fallback);
        assert!(l1.posterior.prob(0) > l0.prob(0));
        // `^a{6,}$` cannot have taught "aaa"+ under strict consistency.
        assert_eq!(l1.posterior.prob(1), 0.0);
    }

    #[test]
    fn l1_fallback_on_mislabeled() {
        let space = three_a();
        let c = corpus(&[("aa", P), ("b", P)]);
        let lp = params(1.0, 0.0);
        let tp = TeacherParams::new(1.0, vec![c.clone()], lp).unwrap();
        let l1 = l1_posterior(&space, &c, &tp).unwrap();
        assert!(l1.fallback);
        assert_eq!(l1.posterior, l0_posterior(&space, &c, &lp));
    }

    #[test]
    fn l1_requires_pool_membership() {
        let space = three_a();
        let tp = TeacherParams::new(1.0, vec![corpus(&[("aaa", P)])], params(1.0, 0.0)).unwrap();
        assert_eq!(
            l1_posterior(&space, &corpus(&[("aaaa", P)]), &tp),
            Err(LearnerError::PoolMissingCorpus)
        );
    }

    #[test]
    fn depth_limits() {
        let space = three_a();
        let c = corpus(&[("aaa", P)]);
        let tp = TeacherParams::new(1.0, vec![c.clone()], params(1.0, 0.0)).unwrap();
        assert!(!posterior_at_depth(&space, &c, &tp, 0).unwrap().fallback);
        assert!(posterior_at_depth(&space, &c, &tp, 1).is_ok());
        assert_eq!(
            posterior_at_depth(&space, &c, &tp, 2),
            Err(LearnerError::UnsupportedDepth(2))
        );
    }

    #[test]
    fn prob_correct_lookup() {
        let space = three_a();
        let p = prior(&space);
        assert!(close(prob_correct(&p, space.target()).unwrap(), 1.0 / 3.0));
        assert!(prob_correct(&p, &Regex::new("^q$").unwrap()).is_err());
        let c = corpus(&[("aaa", P), ("aA", N)]);
        let sharp = l0_posterior(&space, &c, &params(800.0, 0.0));
        assert_eq!(prob_correct(&sharp, space.target()).unwrap(), 1.0);
    }
}
