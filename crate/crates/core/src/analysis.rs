//! Corpus analytics: edit-distance clustering, a permutation test on the
//! number of clusters, cluster-ordering statistics and polarity balance.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{Corpus, Dataset, Label};

/// Link threshold used throughout the teaching analyses.
pub const DEFAULT_THRESHOLD: usize = 2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

/// Unit-cost Levenshtein distance over characters.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = diag + usize::from(ca != cb);
            diag = row[j + 1];
            row[j + 1] = sub.min(row[j] + 1).min(diag + 1);
        }
    }
    row[b.len()]
}

/// Single-linkage clusters of a corpus' examples: connected components of
/// the graph joining examples within `threshold` edits of each other.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Clustering {
    pub threshold: usize,
    /// Example positions per cluster, each ascending; clusters ordered by
    /// their first position.
    pub clusters: Vec<Vec<usize>>,
}

impl Clustering {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

pub fn cluster_strings<S: AsRef<str>>(texts: &[S], threshold: usize) -> Clustering {
    let n = texts.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if levenshtein(texts[i].as_ref(), texts[j].as_ref()) <= threshold {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    let mut clusters: Vec<Vec<usize>> = groups.into_values().collect();
    clusters.sort_by_key(|c| c[0]);
    Clustering {
        threshold,
        clusters,
    }
}

pub fn cluster_corpus(c: &Corpus, threshold: usize) -> Clustering {
    let texts: Vec<&str> = c.examples().iter().map(|e| e.text.as_str()).collect();
    cluster_strings(&texts, threshold)
}

pub fn mean_clusters_per_corpus(d: &Dataset, threshold: usize) -> f64 {
    mean_cluster_count(d.corpora().iter().map(|c| {
        c.examples()
            .iter()
            .map(|e| e.text.as_str())
            .collect::<Vec<_>>()
    }), threshold)
}

fn mean_cluster_count<I, S>(corpora: I, threshold: usize) -> f64
where
    I: Iterator<Item = Vec<S>>,
    S: AsRef<str>,
{
    let (mut total, mut n) = (0usize, 0usize);
    for texts in corpora {
        total += cluster_strings(&texts, threshold).len();
        n += 1;
    }
    total as f64 / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermutationTestResult {
    pub observed_statistic: f64,
    pub null_samples: Vec<f64>,
    pub n_samples: usize,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Fraction of null samples at or below the observed statistic, with
    /// the usual +1 correction.
    pub p_value_below: f64,
    pub threshold: usize,
    pub seed: u64,
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Compares the observed mean clusters per corpus against a null in which
/// strings (with their labels) are shuffled across corpora of the same
/// rule, corpus sizes held fixed. Null sample `i` draws from ChaCha stream
/// `i` of `seed`, so results do not depend on scheduling.
pub fn permutation_test_clusters(
    d: &Dataset,
    threshold: usize,
    n_samples: usize,
    seed: u64,
) -> Result<PermutationTestResult, AnalysisError> {
    if n_samples == 0 {
        return Err(AnalysisError::InsufficientData("n_samples must be >= 1".into()));
    }
    if d.corpora().len() < 2 {
        return Err(AnalysisError::InsufficientData(
            "permutation test needs at least 2 corpora".into(),
        ));
    }
    let mut groups: BTreeMap<&str, Vec<&Corpus>> = BTreeMap::new();
    for c in d.corpora() {
        groups.entry(c.rule_id()).or_default().push(c);
    }
    let groups: Vec<(Vec<usize>, Vec<&str>)> = groups
        .values()
        .map(|corpora| {
            let sizes = corpora.iter().map(|c| c.len()).collect();
            let texts = corpora
                .iter()
                .flat_map(|c| c.examples().iter().map(|e| e.text.as_str()))
                .collect();
            (sizes, texts)
        })
        .collect();

    let observed_statistic = mean_clusters_per_corpus(d, threshold);
    let null_samples: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut shuffled_corpora = Vec::with_capacity(d.corpora().len());
            for (sizes, texts) in &groups {
                let mut pool = texts.clone();
                pool.shuffle(&mut rng);
                let mut rest = pool.as_slice();
                for &size in sizes {
                    let (head, tail) = rest.split_at(size);
                    shuffled_corpora.push(head.to_vec());
                    rest = tail;
                }
            }
            mean_cluster_count(shuffled_corpora.into_iter(), threshold)
        })
        .collect();

    let mut sorted = null_samples.clone();
    sorted.sort_by(f64::total_cmp);
    let at_or_below = sorted.iter().filter(|&&s| s <= observed_statistic).count();
    Ok(PermutationTestResult {
        observed_statistic,
        ci_low: percentile(&sorted, 0.025),
        ci_high: percentile(&sorted, 0.975),
        p_value_below: (at_or_below + 1) as f64 / (n_samples + 1) as f64,
        null_samples,
        n_samples,
        threshold,
        seed,
    })
}

/// One-degree-of-freedom goodness-of-fit statistic against a 50/50 split,
/// without continuity correction: `(a - b)² / (a + b)`.
pub fn chi_square_even_split(a: usize, b: usize) -> f64 {
    if a + b == 0 {
        return 0.0;
    }
    let diff = a as f64 - b as f64;
    diff * diff / (a + b) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FirstInClusterPolarity {
    pub n_first_positive: usize,
    pub n_first_negative: usize,
    pub chi_square: f64,
}

/// Polarity of the earliest example of every cluster, over all corpora.
pub fn first_in_cluster_polarity(d: &Dataset, threshold: usize) -> FirstInClusterPolarity {
    let (mut pos, mut neg) = (0, 0);
    for c in d.corpora() {
        for cluster in cluster_corpus(c, threshold).clusters {
            match c.examples()[cluster[0]].label {
                Label::Positive => pos += 1,
                Label::Negative => neg += 1,
            }
        }
    }
    FirstInClusterPolarity {
        n_first_positive: pos,
        n_first_negative: neg,
        chi_square: chi_square_even_split(pos, neg),
    }
}

/// Fraction of clusters whose positions form one consecutive run.
pub fn cluster_contiguity(cl: &Clustering) -> f64 {
    if cl.clusters.is_empty() {
        return 1.0;
    }
    let contiguous = cl
        .clusters
        .iter()
        .filter(|c| c.windows(2).all(|w| w[1] == w[0] + 1))
        .count();
    contiguous as f64 / cl.clusters.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedTTest {
    pub n: usize,
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub t_statistic: f64,
    pub df: usize,
}

/// One-sample t-test of `diffs` against zero (a paired test when the diffs
/// are per-subject differences). `t` is zero when every diff is equal to
/// zero and infinite when the diffs are constant but nonzero.
pub fn paired_t_test(diffs: &[f64]) -> Result<PairedTTest, AnalysisError> {
    let n = diffs.len();
    if n < 2 {
        return Err(AnalysisError::InsufficientData(
            "a paired t-test needs at least 2 corpora".into(),
        ));
    }
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let t = if mean == 0.0 {
        0.0
    } else {
        mean / (sd / (n as f64).sqrt())
    };
    Ok(PairedTTest {
        n,
        mean_diff: mean,
        sd_diff: sd,
        t_statistic: t,
        df: n - 1,
    })
}

/// Paired t-test on `n_positive - n_negative` over the corpora of `rule_id`.
pub fn polarity_balance_test(d: &Dataset, rule_id: &str) -> Result<PairedTTest, AnalysisError> {
    let diffs: Vec<f64> = d
        .corpora()
        .iter()
        .filter(|c| c.rule_id() == rule_id)
        .map(|c| {
            let (pos, neg) = c.polarity_counts();
            pos as f64 - neg as f64
        })
        .collect();
    paired_t_test(&diffs)
}
