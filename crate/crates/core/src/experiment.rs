//! The L0-vs-L1 comparison over an (α, log β) grid, the synthetic corpus
//! generator, and the single-corpus `learn` entry point shared by the CLI
//! and the HTTP service.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{Corpus, CorpusError, CorpusKey, Dataset, Label, RuleSpace, Source};
use crate::learners::{LearnerError, LearnerParams, PedagogicalPosterior, PoolScorer, PosteriorDistribution, TeacherParams};
use crate::prob::exp_all;
use crate::regex::{Alphabet, Regex};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("no corpora teach hypothesis {hypothesis} of rule space {space}; use the empirical-plus-synthetic pool policy or add them to the dataset")]
    MissingDistractorCorpora { space: String, hypothesis: String },
    #[error("invalid grid: {0}")]
    InvalidSpec(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Which corpora make up the teacher's pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolPolicy {
    /// Dataset corpora for the space's target and distractors only; the
    /// observed corpus must already be one of them.
    EmpiricalOnly,
    /// Dataset corpora plus the observed corpus.
    EmpiricalPlusObserved,
    /// As `EmpiricalPlusObserved`, with synthetic corpora generated for any
    /// hypothesis the dataset has no corpora for.
    EmpiricalPlusSynthetic,
}

impl FromStr for PoolPolicy {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "empirical-only" => Ok(PoolPolicy::EmpiricalOnly),
            "empirical-plus-observed" => Ok(PoolPolicy::EmpiricalPlusObserved),
            "empirical-plus-synthetic" => Ok(PoolPolicy::EmpiricalPlusSynthetic),
            other => Err(ExperimentError::InvalidSpec(format!("unknown pool policy `{other}`"))),
        }
    }
}

/// Parameters of the weak-sampling corpus generator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthesisConfig {
    pub max_examples: usize,
    pub max_len: usize,
    /// Defaults to the characters of the space's hypotheses and its dataset corpora.
    #[serde(skip)]
    pub alphabet: Option<Alphabet>,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            max_examples: 13,
            max_len: 12,
            alphabet: None,
        }
    }
}

/// Draws `n` corpora from the teacher's cost prior read generatively:
/// corpus size `1 + Geometric(1/2)`, string length `Geometric(1/2)` from 0,
/// characters uniform over `alphabet`, labels given by `r`. Both geometric
/// draws are truncated (by rejection) at `max_examples` and `max_len`.
pub fn synthesize_corpora(
    r: &Regex,
    rule_id: &str,
    n: usize,
    seed: u64,
    max_examples: usize,
    max_len: usize,
    alphabet: &Alphabet,
) -> Result<Vec<Corpus>, ExperimentError> {
    if n == 0 || max_examples == 0 {
        return Err(ExperimentError::InvalidSpec(
            "synthesis needs n >= 1 and max_examples >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chars = alphabet.chars();
    (0..n)
        .map(|k| {
            let size = truncated_geometric(&mut rng, 1, max_examples);
            let examples: Vec<(String, Label)> = (0..size)
                .map(|_| {
                    let len = truncated_geometric(&mut rng, 0, max_len);
                    let text: String = (0..len)
                        .map(|_| chars[rng.random_range(0..chars.len())])
                        .collect();
                    let label = Label::from_match(r.is_match(&text));
                    (text, label)
                })
                .collect();
            Corpus::new(rule_id, format!("synthetic-{rule_id}-{k}"), Source::Synthetic, examples)
                .map_err(ExperimentError::from)
        })
        .collect()
}

// `start + Geometric(1/2)`, redrawn until it is at most `max`.
fn truncated_geometric<R: Rng>(rng: &mut R, start: usize, max: usize) -> usize {
    loop {
        let mut k = start;
        while rng.random_bool(0.5) {
            k += 1;
            if k > max {
                break;
            }
        }
        if k <= max {
            return k;
        }
    }
}

/// Default synthesis alphabet for a space: its hypotheses' characters and
/// every character of its corpora in `d`.
pub fn space_alphabet(d: &Dataset, space: &RuleSpace) -> Alphabet {
    let mut chars: BTreeSet<char> = space.mentioned_chars();
    for c in d.corpora_for_space(space.name()) {
        for e in c.examples() {
            chars.extend(e.text.chars());
        }
    }
    if chars.is_empty() {
        chars.insert('a');
    }
    Alphabet::new(chars).expect("non-empty")
}

/// Seed used for the synthetic part of the bundled dataset.
pub const BUNDLE_SEED: u64 = 0;

/// Synthetic corpora that top up `base`: each space's target gets corpora
/// until it has `per_target`, and each distractor gets `per_distractor`.
/// Alphabets come from [`space_alphabet`] over `base`.
pub fn synthetic_extension(
    base: &Dataset,
    seed: u64,
    per_target: usize,
    per_distractor: usize,
    synthesis: &SynthesisConfig,
) -> Result<Vec<Corpus>, ExperimentError> {
    let mut out = Vec::new();
    for space in base.rule_spaces().values() {
        let alphabet = synthesis
            .alphabet
            .clone()
            .unwrap_or_else(|| space_alphabet(base, space));
        for i in 0..space.len() {
            let id = space.hypothesis_id(i);
            let have = base.corpora().iter().filter(|c| c.rule_id() == id).count();
            let want = if i == 0 { per_target } else { per_distractor };
            if want <= have {
                continue;
            }
            out.extend(synthesize_corpora(
                space.hypothesis(i).expect("index in range"),
                &id,
                want - have,
                derive_seed(seed, space.name(), i),
                synthesis.max_examples,
                synthesis.max_len,
                &alphabet,
            )?);
        }
    }
    Ok(out)
}

/// The teacher's pool for one space and which hypotheses had no corpora.
#[derive(Debug, Clone)]
pub struct PoolAssembly {
    pub pool: Vec<Corpus>,
    /// Hypothesis indices with no empirical corpora.
    pub missing: Vec<usize>,
}

/// Deduplicates by corpus key, keeping the first occurrence.
fn push_unique(pool: &mut Vec<Corpus>, seen: &mut HashSet<CorpusKey>, c: Corpus) {
    if seen.insert(c.key()) {
        pool.push(c);
    }
}

/// Builds the pool for `space` from the dataset's corpora for its target and
/// distractors, applying `policy`. `observed` is appended unless the policy
/// is empirical-only.
pub fn assemble_pool(
    d: &Dataset,
    space: &RuleSpace,
    observed: Option<&Corpus>,
    policy: PoolPolicy,
    seed: u64,
    synthesis: &SynthesisConfig,
    synthetic_per_hypothesis: usize,
) -> Result<PoolAssembly, ExperimentError> {
    let mut pool = Vec::new();
    let mut seen = HashSet::new();
    let mut taught = vec![false; space.len()];
    for c in d.corpora_for_space(space.name()) {
        if let Some((_, i)) = d.resolve(c.rule_id()) {
            taught[i] = true;
        }
        push_unique(&mut pool, &mut seen, c.clone());
    }
    let missing: Vec<usize> = (0..space.len()).filter(|&i| !taught[i]).collect();
    if policy == PoolPolicy::EmpiricalPlusSynthetic {
        let alphabet = synthesis
            .alphabet
            .clone()
            .unwrap_or_else(|| space_alphabet(d, space));
        for &i in &missing {
            let r = space.hypothesis(i).expect("index in range");
            let corpora = synthesize_corpora(
                r,
                &space.hypothesis_id(i),
                synthetic_per_hypothesis.max(1),
                derive_seed(seed, space.name(), i),
                synthesis.max_examples,
                synthesis.max_len,
                &alphabet,
            )?;
            corpora
                .into_iter()
                .for_each(|c| push_unique(&mut pool, &mut seen, c));
        }
    }
    if let Some(c) = observed {
        if policy != PoolPolicy::EmpiricalOnly {
            push_unique(&mut pool, &mut seen, c.clone());
        }
    }
    Ok(PoolAssembly { pool, missing })
}

// FNV-1a over the space name, mixed with the seed and hypothesis index.
fn derive_seed(seed: u64, space: &str, index: usize) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in space.bytes().chain((index as u64).to_le_bytes()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ seed.rotate_left(17)
}

/// L0 and L1 posteriors for one observed corpus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearnOutcome {
    pub rule_space: String,
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub pool_size: usize,
    pub l0: PosteriorDistribution,
    pub l1: PosteriorDistribution,
    pub fallback: bool,
    /// `Q` per hypothesis on the observed corpus.
    pub errors: Vec<usize>,
}

/// Runs L0 and L1 on `observed`, with the teacher's pool made of
/// `empirical` (deduplicated) plus `observed`.
pub fn learn_in_space<'a>(
    space: &RuleSpace,
    empirical: impl IntoIterator<Item = &'a Corpus>,
    observed: &Corpus,
    alpha: f64,
    learner: LearnerParams,
) -> Result<LearnOutcome, ExperimentError> {
    let mut pool = Vec::new();
    let mut seen = HashSet::new();
    for c in empirical {
        push_unique(&mut pool, &mut seen, c.clone());
    }
    push_unique(&mut pool, &mut seen, observed.clone());
    let tp = TeacherParams::new(alpha, pool, learner)?;
    let l0 = crate::learners::l0_posterior(space, observed, &learner);
    let PedagogicalPosterior { posterior, fallback } =
        crate::learners::l1_posterior(space, observed, &tp)?;
    Ok(LearnOutcome {
        rule_space: space.name().to_string(),
        alpha,
        beta: learner.beta,
        eta: learner.eta,
        pool_size: tp.pool().len(),
        l0,
        l1: posterior,
        fallback,
        errors: space.hypotheses().map(|h| observed.error_count(h)).collect(),
    })
}

/// [`learn_in_space`] with the pool drawn from the dataset corpora of `space_name`.
pub fn learn_corpus(
    d: &Dataset,
    space_name: &str,
    observed: &Corpus,
    alpha: f64,
    learner: LearnerParams,
) -> Result<LearnOutcome, ExperimentError> {
    let space = d
        .rule_space(space_name)
        .ok_or_else(|| CorpusError::UnknownRule(space_name.to_string()))?;
    learn_in_space(space, d.corpora_for_space(space_name), observed, alpha, learner)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    pub alphas: Vec<f64>,
    pub log_betas: Vec<f64>,
    pub eta: f64,
    pub pool_policy: PoolPolicy,
    pub seed: u64,
    pub synthesis: SynthesisConfig,
    /// Corpora generated per untaught hypothesis under `EmpiricalPlusSynthetic`.
    pub synthetic_per_hypothesis: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            alphas: vec![1.0, 2.0, 4.0, 8.0],
            log_betas: vec![-0.1, -1.0, -2.0, -4.0],
            eta: 0.0,
            pool_policy: PoolPolicy::EmpiricalPlusObserved,
            seed: 0,
            synthesis: SynthesisConfig::default(),
            synthetic_per_hypothesis: 8,
        }
    }
}

impl GridSpec {
    fn validate(&self) -> Result<(), ExperimentError> {
        if self.alphas.is_empty() || self.log_betas.is_empty() {
            return Err(ExperimentError::InvalidSpec("grid axes must be non-empty".into()));
        }
        if let Some(a) = self.alphas.iter().find(|&&a| !(a >= 1.0 && a.is_finite())) {
            return Err(ExperimentError::InvalidSpec(format!("alpha {a} is not >= 1")));
        }
        if let Some(b) = self.log_betas.iter().find(|&&b| !(b <= 0.0 && b.is_finite())) {
            return Err(ExperimentError::InvalidSpec(format!("log beta {b} is not <= 0")));
        }
        LearnerParams::new(1.0, self.eta)?;
        Ok(())
    }
}

/// One (cell, corpus) evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRecord {
    pub alpha: f64,
    pub log_beta: f64,
    pub beta: f64,
    pub rule_id: String,
    pub corpus_index: usize,
    pub teacher_id: String,
    pub source: Source,
    pub p_correct_l0: f64,
    pub p_correct_l1: f64,
    /// 1 if the target is the unique MAP hypothesis, `1/k` if tied with `k-1` others.
    pub map_correct_l0: f64,
    pub map_correct_l1: f64,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub alpha: f64,
    pub log_beta: f64,
    pub n_corpora: usize,
    pub mean_p_correct_l0: f64,
    pub mean_p_correct_l1: f64,
    pub map_accuracy_l0: f64,
    pub map_accuracy_l1: f64,
    pub n_fallback: usize,
}

impl CellSummary {
    pub fn diff(&self) -> f64 {
        self.mean_p_correct_l1 - self.mean_p_correct_l0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridResult {
    pub spec: GridSpec,
    /// Ordered by α, then log β (both in spec order), then dataset order.
    pub records: Vec<GridRecord>,
    /// Row-major: `cells[a * log_betas.len() + b]`.
    pub cells: Vec<CellSummary>,
}

impl GridResult {
    pub fn cell(&self, alpha_index: usize, log_beta_index: usize) -> &CellSummary {
        &self.cells[alpha_index * self.spec.log_betas.len() + log_beta_index]
    }
}

fn map_credit(probs: &[f64]) -> f64 {
    let best = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if probs[0] < best {
        return 0.0;
    }
    1.0 / probs.iter().filter(|&&p| p == best).count() as f64
}

struct SpaceJob<'a> {
    space: &'a RuleSpace,
    scorer: PoolScorer,
    /// (dataset index, pool index) of each evaluated corpus.
    evaluated: Vec<(usize, usize)>,
}

/// Evaluates L0 and L1 on every corpus that teaches a space's target, at
/// every grid cell.
pub fn run_grid(d: &Dataset, spec: &GridSpec) -> Result<GridResult, ExperimentError> {
    spec.validate()?;
    let mut jobs = Vec::new();
    for space in d.rule_spaces().values() {
        let targets: Vec<usize> = d
            .corpora()
            .iter()
            .enumerate()
            .filter(|(_, c)| c.rule_id() == space.name())
            .map(|(i, _)| i)
            .collect();
        if targets.is_empty() {
            continue;
        }
        let assembly = assemble_pool(
            d,
            space,
            None,
            spec.pool_policy,
            spec.seed,
            &spec.synthesis,
            spec.synthetic_per_hypothesis,
        )?;
        if spec.pool_policy != PoolPolicy::EmpiricalPlusSynthetic {
            if let Some(&i) = assembly.missing.first() {
                return Err(ExperimentError::MissingDistractorCorpora {
                    space: space.name().to_string(),
                    hypothesis: space.hypothesis(i).expect("in range").to_string(),
                });
            }
        }
        // Target corpora come from the dataset, so they are already pooled.
        let keys: Vec<CorpusKey> = assembly.pool.iter().map(Corpus::key).collect();
        let evaluated = targets
            .into_iter()
            .map(|i| {
                let key = d.corpora()[i].key();
                let j = keys.iter().position(|k| *k == key).expect("dataset corpus is pooled");
                (i, j)
            })
            .collect();
        jobs.push(SpaceJob {
            space,
            scorer: PoolScorer::new(space, &assembly.pool),
            evaluated,
        });
    }

    let cells: Vec<(f64, f64)> = spec
        .alphas
        .iter()
        .flat_map(|&a| spec.log_betas.iter().map(move |&b| (a, b)))
        .collect();
    let per_cell: Vec<Vec<GridRecord>> = cells
        .par_iter()
        .map(|&(alpha, log_beta)| {
            let beta = log_beta.exp();
            let learner = LearnerParams { beta, eta: spec.eta };
            let mut records = Vec::new();
            for job in &jobs {
                for &(i, j) in &job.evaluated {
                    let c = &d.corpora()[i];
                    let l0 = exp_all(&job.scorer.l0_log(j, beta));
                    let (l1_log, fallback) = job.scorer.l1_log(j, alpha, &learner);
                    let l1 = exp_all(&l1_log);
                    records.push(GridRecord {
                        alpha,
                        log_beta,
                        beta,
                        rule_id: job.space.name().to_string(),
                        corpus_index: i,
                        teacher_id: c.teacher_id().to_string(),
                        source: c.source(),
                        p_correct_l0: l0[0],
                        p_correct_l1: l1[0],
                        map_correct_l0: map_credit(&l0),
                        map_correct_l1: map_credit(&l1),
                        fallback,
                    });
                }
            }
            records.sort_by_key(|r| r.corpus_index);
            records
        })
        .collect();

    let summaries = cells
        .iter()
        .zip(&per_cell)
        .map(|(&(alpha, log_beta), records)| {
            let n = records.len().max(1) as f64;
            let mean = |f: fn(&GridRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
            CellSummary {
                alpha,
                log_beta,
                n_corpora: records.len(),
                mean_p_correct_l0: mean(|r| r.p_correct_l0),
                mean_p_correct_l1: mean(|r| r.p_correct_l1),
                map_accuracy_l0: mean(|r| r.map_correct_l0),
                map_accuracy_l1: mean(|r| r.map_correct_l1),
                n_fallback: records.iter().filter(|r| r.fallback).count(),
            }
        })
        .collect();
    Ok(GridResult {
        spec: spec.clone(),
        records: per_cell.into_iter().flatten().collect(),
        cells: summaries,
    })
}

/// Per-cell mean tables (rows α, columns log β) for L0, L1 and L1 − L0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSummary {
    pub alphas: Vec<f64>,
    pub log_betas: Vec<f64>,
    pub l0: Vec<Vec<f64>>,
    pub l1: Vec<Vec<f64>>,
    pub diff: Vec<Vec<f64>>,
    pub map_l0: Vec<Vec<f64>>,
    pub map_l1: Vec<Vec<f64>>,
    /// Largest |L1 − L0| along the α = 1 row, if the grid has one.
    pub alpha_one_max_abs_diff: Option<f64>,
    /// Largest |L1 − L0| along the column with the largest β.
    pub largest_beta_max_abs_diff: f64,
    pub max_diff: f64,
    pub min_diff: f64,
}

pub fn summarize(gr: &GridResult) -> GridSummary {
    let (na, nb) = (gr.spec.alphas.len(), gr.spec.log_betas.len());
    let table = |f: &dyn Fn(&CellSummary) -> f64| -> Vec<Vec<f64>> {
        (0..na)
            .map(|a| (0..nb).map(|b| f(gr.cell(a, b))).collect())
            .collect()
    };
    let diff = table(&|c| c.diff());
    let alpha_one_max_abs_diff = gr
        .spec
        .alphas
        .iter()
        .position(|&a| a == 1.0)
        .map(|a| diff[a].iter().fold(0.0f64, |m, d| m.max(d.abs())));
    let top_beta = (0..nb)
        .max_by(|&x, &y| gr.spec.log_betas[x].total_cmp(&gr.spec.log_betas[y]))
        .expect("non-empty axis");
    let flat = || diff.iter().flatten().copied();
    GridSummary {
        alphas: gr.spec.alphas.clone(),
        log_betas: gr.spec.log_betas.clone(),
        l0: table(&|c| c.mean_p_correct_l0),
        l1: table(&|c| c.mean_p_correct_l1),
        map_l0: table(&|c| c.map_accuracy_l0),
        map_l1: table(&|c| c.map_accuracy_l1),
        alpha_one_max_abs_diff,
        largest_beta_max_abs_diff: (0..na).fold(0.0f64, |m, a| m.max(diff[a][top_beta].abs())),
        max_diff: flat().fold(f64::NEG_INFINITY, f64::max),
        min_diff: flat().fold(f64::INFINITY, f64::min),
        diff,
    }
}

impl GridSummary {
    /// Plain-text report with the three tables and the on-par checks.
    pub fn report(&self) -> String {
        let mut out = String::new();
        for (name, t) in [("L0 mean P(correct)", &self.l0), ("L1 mean P(correct)", &self.l1), ("L1 - L0", &self.diff)] {
            let _ = writeln!(out, "{name}");
            let _ = write!(out, "{:>8}", "alpha");
            for b in &self.log_betas {
                let _ = write!(out, " {:>12}", format!("logb={b}"));
            }
            out.push('\n');
            for (a, row) in self.alphas.iter().zip(t) {
                let _ = write!(out, "{a:>8}");
                for v in row {
                    let _ = write!(out, " {v:>12.6}");
                }
                out.push('\n');
            }
            out.push('\n');
        }
        if let Some(d) = self.alpha_one_max_abs_diff {
            let _ = writeln!(out, "alpha=1 row max |L1-L0| = {d:.6}");
        }
        let _ = writeln!(out, "largest-beta column max |L1-L0| = {:.6}", self.largest_beta_max_abs_diff);
        let _ = writeln!(out, "max L1-L0 = {:.6}", self.max_diff);
        let _ = writeln!(out, "min L1-L0 = {:.6}", self.min_diff);
        out
    }

    /// Writes `summary_{l0,l1,diff}.csv`, gnuplot matrices and `report.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), ExperimentError> {
        fs::create_dir_all(dir)?;
        for (name, t) in [("l0", &self.l0), ("l1", &self.l1), ("diff", &self.diff)] {
            let mut w = csv::Writer::from_path(dir.join(format!("summary_{name}.csv")))?;
            let mut header = vec!["alpha".to_string()];
            header.extend(self.log_betas.iter().map(|b| format!("log_beta={b}")));
            w.write_record(&header)?;
            for (a, row) in self.alphas.iter().zip(t) {
                let mut rec = vec![a.to_string()];
                rec.extend(row.iter().map(|v| format!("{v:.17}")));
                w.write_record(&rec)?;
            }
            w.flush()?;

            // gnuplot `matrix nonuniform`: first row is the column axis.
            let mut m = format!("{}", self.log_betas.len());
            for b in &self.log_betas {
                let _ = write!(m, " {b}");
            }
            m.push('\n');
            for (a, row) in self.alphas.iter().zip(t) {
                let _ = write!(m, "{a}");
                for v in row {
                    let _ = write!(m, " {v:.17}");
                }
                m.push('\n');
            }
            fs::write(dir.join(format!("matrix_{name}.dat")), m)?;
        }
        fs::write(dir.join("report.txt"), self.report())?;
        Ok(())
    }
}

/// Writes one row per (cell, corpus) to `path`.
pub fn write_grid_csv(gr: &GridResult, path: &Path) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in &gr.records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
