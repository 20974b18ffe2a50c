//! Per-session teaching state and the computations behind each endpoint.

use std::time::{Instant, SystemTime, UNIX_EPOCH};

use pedagogy_core::analysis::{cluster_corpus, DEFAULT_THRESHOLD};
use pedagogy_core::corpus::validate_text;
use pedagogy_core::experiment::{learn_in_space, LearnOutcome};
use pedagogy_core::learners::{l0_posterior, prior, teacher_prior_log_score, LearnerParams};
use pedagogy_core::prob::log_normalize;
use pedagogy_core::regex::Alphabet;
use pedagogy_core::{Corpus, Label, LabeledExample, RuleSpace, Source};
use serde::Serialize;

use crate::ServiceError;

pub const MAX_TEXT_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Params {
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
}

impl Params {
    pub fn new(alpha: f64, beta: f64, eta: f64) -> Result<Self, ServiceError> {
        if !(alpha.is_finite() && alpha >= 1.0) {
            return Err(ServiceError::InvalidParams(format!("alpha must be >= 1, got {alpha}")));
        }
        LearnerParams::new(beta, eta).map_err(|e| ServiceError::InvalidParams(e.to_string()))?;
        Ok(Params { alpha, beta, eta })
    }

    pub fn learner(&self) -> LearnerParams {
        LearnerParams {
            beta: self.beta,
            eta: self.eta,
        }
    }
}

/// Posteriors over the current corpus; both equal the prior while it is empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Posteriors {
    pub l0: Vec<f64>,
    pub l1: Vec<f64>,
    pub fallback: bool,
    pub pool_size: usize,
}

impl From<&LearnOutcome> for Posteriors {
    fn from(o: &LearnOutcome) -> Self {
        Posteriors {
            l0: o.l0.probs().to_vec(),
            l1: o.l1.probs().to_vec(),
            fallback: o.fallback,
            pool_size: o.pool_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Suggestion {
    pub text: String,
    pub label: Label,
    /// Teacher probability of the extended corpus, normalized over all candidates.
    pub score: f64,
}

#[derive(Debug)]
pub struct Session {
    pub id: String,
    pub space: RuleSpace,
    pub target: Option<usize>,
    pub params: Params,
    /// Empirical corpora for the teacher's pool; the session corpus is added at inference time.
    pub pool: Vec<Corpus>,
    /// Candidate alphabet for suggestions.
    pub alphabet: Alphabet,
    pub examples: Vec<LabeledExample>,
    pub posteriors: Posteriors,
    pub created_at: u64,
    pub updated_at: u64,
    pub last_used: Instant,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

impl Session {
    pub fn new(
        id: String,
        space: RuleSpace,
        target: Option<usize>,
        params: Params,
        pool: Vec<Corpus>,
        alphabet: Alphabet,
    ) -> Self {
        let p = prior(&space).probs().to_vec();
        let now = unix_now();
        Session {
            id,
            space,
            target,
            params,
            posteriors: Posteriors {
                l0: p.clone(),
                l1: p,
                fallback: false,
                pool_size: pool.len(),
            },
            pool,
            alphabet,
            examples: Vec::new(),
            created_at: now,
            updated_at: now,
            last_used: Instant::now(),
        }
    }

    /// The corpus so far, or `None` before the first example.
    pub fn corpus(&self) -> Option<Corpus> {
        if self.examples.is_empty() {
            return None;
        }
        let examples = self.examples.iter().map(|e| (e.text.clone(), e.label));
        Some(
            Corpus::new(self.space.name(), self.id.clone(), Source::Session, examples)
                .expect("session examples are validated on entry"),
        )
    }

    /// Appends an example and recomputes both posteriors over the whole corpus.
    pub fn add_example(&mut self, text: String, label: Label) -> Result<LabeledExample, ServiceError> {
        if text.chars().count() > MAX_TEXT_LEN {
            return Err(ServiceError::InvalidString(format!("longer than {MAX_TEXT_LEN} characters")));
        }
        validate_text(&text).map_err(|e| ServiceError::InvalidString(e.to_string()))?;
        let example = LabeledExample {
            text,
            label,
            position: self.examples.len(),
        };
        self.examples.push(example.clone());
        let corpus = self.corpus().expect("just pushed");
        match learn_in_space(&self.space, &self.pool, &corpus, self.params.alpha, self.params.learner()) {
            Ok(outcome) => self.posteriors = Posteriors::from(&outcome),
            Err(e) => {
                self.examples.pop();
                return Err(ServiceError::Internal(e.to_string()));
            }
        }
        self.updated_at = unix_now();
        Ok(example)
    }

    pub fn error_counts(&self) -> Vec<usize> {
        match self.corpus() {
            Some(c) => self.space.hypotheses().map(|h| c.error_count(h)).collect(),
            None => vec![0; self.space.len()],
        }
    }

    pub fn clusters(&self) -> Vec<Vec<usize>> {
        self.corpus()
            .map(|c| cluster_corpus(&c, DEFAULT_THRESHOLD).clusters)
            .unwrap_or_default()
    }

    /// Ranks one-example extensions of the corpus, labeled by the declared
    /// target, by the teacher weight `[π(c') · P_L0(target | c')]^α`.
    /// Candidates are every string over `alphabet` up to `max_len`; ties keep
    /// enumeration order (shortest first).
    pub fn suggest(&self, n: usize, alphabet: Option<&Alphabet>, max_len: usize) -> Result<Vec<Suggestion>, ServiceError> {
        let target_index = self.target.ok_or(ServiceError::NoTargetDeclared)?;
        if n == 0 {
            return Ok(Vec::new());
        }
        let target = self.space.hypothesis(target_index).expect("validated at creation");
        let alphabet = alphabet.unwrap_or(&self.alphabet);
        let learner = self.params.learner();
        let base: Vec<(String, Label)> = self.examples.iter().map(|e| (e.text.clone(), e.label)).collect();
        let mut candidates = Vec::new();
        let mut logs = Vec::new();
        for text in alphabet.enumerate_strings(max_len) {
            let label = Label::from_match(target.is_match(&text));
            let mut examples = base.clone();
            examples.push((text.clone(), label));
            let extended = Corpus::new(self.space.name(), self.id.clone(), Source::Session, examples)
                .map_err(|e| ServiceError::InvalidString(e.to_string()))?;
            let log_l0 = l0_posterior(&self.space, &extended, &learner).log_probs()[target_index];
            let log_prior = teacher_prior_log_score(&extended, target, learner.eta);
            logs.push(self.params.alpha * (log_prior + log_l0));
            candidates.push((text, label));
        }
        if log_normalize(&mut logs).is_none() {
            return Ok(Vec::new());
        }
        let mut ranked: Vec<(usize, f64)> = logs.iter().map(|l| l.exp()).enumerate().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(ranked
            .into_iter()
            .take(n)
            .map(|(i, score)| {
                let (text, label) = candidates[i].clone();
                Suggestion { text, label, score }
            })
            .collect())
    }
}
