//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fail.

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Method, Request};
use http_body_util::BodyExt;
use pedagogy_core::analysis::{
    first_in_cluster_polarity, levenshtein, permutation_test_clusters, polarity_balance_test,
    PermutationTestResult,
};
use pedagogy_core::corpus::builtin_rule_spaces;
use pedagogy_core::experiment::{run_grid, summarize, GridSpec};
use pedagogy_core::learners::{
    l0_posterior, l1_posterior, prior, t1_distribution, teacher_prior_score, LearnerParams, TeacherParams,
};
use pedagogy_core::prob::{argmax, entropy};
use pedagogy_core::regex::{Alphabet, BUNDLED_PATTERNS};
use pedagogy_core::{Corpus, Dataset, Label, Regex, RuleSpace, Source};
use pedagogy_oracle as oracle;
use pedagogy_service::{router, AppState, ServiceConfig};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tower::ServiceExt;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    if b == 0.0 {
        a == 0.0
    } else {
        ((a - b) / b).abs() <= tol
    }
}

fn matcher_vs_derivatives() -> Outcome {
    let start = Instant::now();
    let alphabet = Alphabet::new(['a', 'A', 's', '1', '2', '[', ']']).unwrap();
    let strings: Vec<String> = alphabet.enumerate_strings(6).collect();
    let mut cases = 0usize;
    let mut disagreements = 0usize;
    for p in BUNDLED_PATTERNS {
        let r = Regex::new(p).unwrap();
        for s in &strings {
            cases += 1;
            if r.is_match(s) != oracle::derivative_match(r.ast(), s) {
                disagreements += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        disagreements == 0 && elapsed < Duration::from_secs(60),
        format!("{cases} cases, {disagreements} disagreements, {elapsed:.2?}"),
    )
}

const BANK: [&str; 10] = [
    "^a+$", "^a*b$", "^b.*$", "^.{2}$", "^[ab]a$", "^a{2,}$", "^.*b.*$", "^a?b?$", "^(ab)+$", "^b{1,3}$",
];

fn random_text(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(0..5);
    (0..len).map(|_| *[ 'a', 'b'].choose(rng).unwrap()).collect()
}

fn random_corpus(rng: &mut ChaCha8Rng, rule: &str) -> Corpus {
    let n = rng.random_range(1..=5);
    let examples: Vec<(String, Label)> = (0..n)
        .map(|_| {
            let label = if rng.random_bool(0.5) { Label::Positive } else { Label::Negative };
            (random_text(rng), label)
        })
        .collect();
    Corpus::new(rule, "t", Source::Synthetic, examples).unwrap()
}

fn random_pool(rng: &mut ChaCha8Rng, rule: &str) -> Vec<Corpus> {
    let n = rng.random_range(1..=5);
    let mut seen = HashSet::new();
    (0..n)
        .map(|_| random_corpus(rng, rule))
        .filter(|c| seen.insert(c.key()))
        .collect()
}

fn compare(worst: &mut f64, failures: &mut Vec<String>, instance: usize, what: &str, got: &[f64], want: &[f64]) {
    if got.len() != want.len() {
        failures.push(format!("instance {instance} {what}: length {} vs {}", got.len(), want.len()));
    }
    for (a, b) in got.iter().zip(want) {
        if *b != 0.0 {
            *worst = worst.max(((a - b) / b).abs());
        }
        if !rel_close(*a, *b, 1e-9) {
            failures.push(format!("instance {instance} {what}: {a} vs {b}"));
        }
    }
}

fn learners_vs_direct_summation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for instance in 0..50 {
        let k = rng.random_range(1..=3);
        let patterns: Vec<&str> = BANK.choose_multiple(&mut rng, k).copied().collect();
        let space = RuleSpace::from_patterns("rand", patterns[0], &patterns[1..]).unwrap();
        let pool = random_pool(&mut rng, "rand");
        let alpha = rng.random_range(1.0..8.0);
        let beta = rng.random_range(0.0..5.0);
        let eta = *[0.0, 0.05, 0.3].choose(&mut rng).unwrap();
        let learner = LearnerParams::new(beta, eta).unwrap();
        let tp = TeacherParams::new(alpha, pool.clone(), learner).unwrap();
        let j = rng.random_range(0..pool.len());
        let c = &pool[j];

        compare(&mut worst, &mut failures, instance, "l0", l0_posterior(&space, c, &learner).probs(), &oracle::l0(&space, c, beta));
        for (i, r) in space.hypotheses().enumerate() {
            match (t1_distribution(r, &space, &tp).ok(), oracle::t1(&space, i, &pool, alpha, beta, eta)) {
                (Some(d), Some(w)) => compare(&mut worst, &mut failures, instance, "t1", d.probs(), &w),
                (None, None) => {}
                _ => failures.push(format!("instance {instance} t1 degeneracy differs")),
            }
        }
        let l1 = l1_posterior(&space, c, &tp).unwrap();
        match oracle::l1(&space, j, &pool, alpha, beta, eta) {
            Some(w) if !l1.fallback => compare(&mut worst, &mut failures, instance, "l1", l1.posterior.probs(), &w),
            None if l1.fallback => {}
            _ => failures.push(format!("instance {instance} l1 fallback differs")),
        }
    }
    check(
        failures.is_empty(),
        format!("50 instances, max relative error {worst:.2e}{}", first_failure(&failures)),
    )
}

fn first_failure(failures: &[String]) -> String {
    failures.first().map(|f| format!("; first failure: {f}")).unwrap_or_default()
}

fn limit_identities() -> Outcome {
    let d = Dataset::bundled();
    let mut failures = Vec::new();
    let mut worst_log = 0.0f64;
    let (mut strict_checked, mut slack_checked, mut zero_checked) = (0, 0, 0);
    for c in d.corpora() {
        let (space, _) = d.resolve(c.rule_id()).unwrap();
        let p = prior(space);

        let l0 = l0_posterior(space, c, &LearnerParams::new(0.0, 0.0).unwrap());
        for (a, b) in l0.log_probs().iter().zip(p.log_probs()) {
            worst_log = worst_log.max((a - b).abs());
        }

        let all_consistent = space.hypotheses().all(|h| c.error_count(h) == 0);
        for eta in [0.0, 0.1] {
            if eta == 0.0 && !all_consistent {
                continue;
            }
            let tp = TeacherParams::new(2.0, vec![c.clone()], LearnerParams::new(1.0, eta).unwrap()).unwrap();
            let l1 = l1_posterior(space, c, &tp).unwrap();
            if l1.fallback || !l1.posterior.probs().iter().zip(p.probs()).all(|(a, b)| (a - b).abs() <= 1e-12) {
                failures.push(format!("single-corpus pool differs from prior on {} (eta {eta})", c.teacher_id()));
            }
            if eta == 0.0 {
                strict_checked += 1;
            } else {
                slack_checked += 1;
            }
        }

        for h in space.hypotheses() {
            let score = teacher_prior_score(c, h, 0.0);
            if (c.error_count(h) > 0) != (score == 0.0) {
                failures.push(format!("teacher prior {score} with Q {} on {}", c.error_count(h), c.teacher_id()));
            }
            zero_checked += 1;
        }
    }
    if worst_log > 1e-12 {
        failures.push(format!("beta = 0 log error {worst_log:.2e}"));
    }
    check(
        failures.is_empty(),
        format!(
            "beta=0 max log error {worst_log:.1e}; single-pool identity on {strict_checked} (eta 0) + {slack_checked} (eta 0.1) corpora; {zero_checked} strict teacher scores{}",
            first_failure(&failures)
        ),
    )
}

fn temperature_property() -> Outcome {
    let d = Dataset::bundled();
    let spaces: Vec<&RuleSpace> = d.rule_spaces().values().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut failures = Vec::new();
    for trial in 0..100 {
        let space = *spaces.choose(&mut rng).unwrap();
        let mut corpora: Vec<&Corpus> = d.corpora_for_space(space.name()).collect();
        corpora.shuffle(&mut rng);
        let size = rng.random_range(2..=12);
        let mut pool: Vec<Corpus> = Vec::new();
        let mut seen = HashSet::new();
        // Always include a corpus of the target so the strict teacher is not degenerate.
        let first_target = corpora.iter().position(|c| c.rule_id() == space.name()).unwrap();
        corpora.swap(0, first_target);
        for c in corpora.into_iter().take(size) {
            if seen.insert(c.key()) {
                pool.push(c.clone());
            }
        }
        let beta = rng.random_range(0.0..5.0);
        let learner = LearnerParams::new(beta, 0.0).unwrap();
        let mut last: Option<(f64, Option<usize>)> = None;
        for alpha in [1.0, 2.0, 4.0, 8.0] {
            let tp = TeacherParams::new(alpha, pool.clone(), learner).unwrap();
            let dist = t1_distribution(space.target(), space, &tp).unwrap();
            let h = entropy(dist.probs());
            let best = argmax(dist.log_probs());
            if let Some((prev_h, prev_best)) = last {
                if h > prev_h + 1e-12 {
                    failures.push(format!("trial {trial}: entropy rose {prev_h} -> {h} at alpha {alpha}"));
                }
                if best != prev_best {
                    failures.push(format!("trial {trial}: argmax moved at alpha {alpha}"));
                }
            }
            last = Some((h, best));
        }
    }
    check(failures.is_empty(), format!("100 pools{}", first_failure(&failures)))
}

fn grid_reproduction() -> Outcome {
    let start = Instant::now();
    let gr = run_grid(&Dataset::bundled(), &GridSpec::default()).map_err(|e| e.to_string())?;
    let s = summarize(&gr);
    let elapsed = start.elapsed();
    let (a, b) = (s.max_diff >= 0.10, s.min_diff >= -0.05);
    check(
        a && b && elapsed < Duration::from_secs(300),
        format!(
            "(a) max L1-L0 = {:.4} (need >= 0.10): {}; (b) min L1-L0 = {:.4} (need >= -0.05): {}; {elapsed:.2?}",
            s.max_diff,
            if a { "ok" } else { "not met" },
            s.min_diff,
            if b { "ok" } else { "not met" },
        ),
    )
}

fn chi_square_anchor() -> Outcome {
    // 102 clusters led by a positive and 28 led by a negative.
    let corpora: Vec<Corpus> = (0..130)
        .map(|i| {
            let label = if i < 102 { Label::Positive } else { Label::Negative };
            Corpus::new("3a", format!("t{i}"), Source::Synthetic, [("aaa", label)]).unwrap()
        })
        .collect();
    let d = Dataset::new(corpora, builtin_rule_spaces()).unwrap();
    let r = first_in_cluster_polarity(&d, 2);
    check(
        r.n_first_positive == 102 && r.n_first_negative == 28 && (r.chi_square - 42.12).abs() <= 0.005,
        format!("({}, {}) -> chi2 = {:.4}", r.n_first_positive, r.n_first_negative, r.chi_square),
    )
}

fn t_statistic_anchor() -> Outcome {
    // Per-corpus (positives - negatives): mean -25/39, sample SD 1.857.
    let composition = [(-3, 5), (-2, 9), (-1, 13), (0, 3), (1, 1), (2, 4), (3, 4)];
    let mut corpora = Vec::new();
    for (diff, count) in composition {
        for _ in 0..count {
            let (pos, neg) = if diff >= 0 { (diff as usize + 1, 1) } else { (1, (1 - diff) as usize) };
            let examples = (0..pos)
                .map(|k| (format!("1234{k}"), Label::Positive))
                .chain((0..neg).map(|k| (format!("123{k}"), Label::Negative)));
            corpora.push(Corpus::new("zip-code", format!("t{}", corpora.len()), Source::Synthetic, examples).unwrap());
        }
    }
    let d = Dataset::new(corpora, builtin_rule_spaces()).unwrap();
    let t = polarity_balance_test(&d, "zip-code").map_err(|e| e.to_string())?;
    check(
        t.n == 39 && (t.t_statistic.abs() - 2.15).abs() <= 0.02,
        format!("n = {}, M = {:.3}, SD = {:.3}, t({}) = {:.4}", t.n, t.mean_diff, t.sd_diff, t.df, t.t_statistic),
    )
}

/// 20 corpora, each three clusters of strings within edit distance 1 of
/// each other and more than 2 from every string in any other cluster.
fn planted_dataset(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let letters: Vec<char> = ('a'..='z').collect();
    let mut bases: Vec<String> = Vec::new();
    while bases.len() < 60 {
        let w: String = (0..7).map(|_| *letters.choose(&mut rng).unwrap()).collect();
        if bases.iter().all(|b| levenshtein(b, &w) > 4) {
            bases.push(w);
        }
    }
    let corpora = bases
        .chunks(3)
        .enumerate()
        .map(|(k, chunk)| {
            let mut examples = Vec::new();
            for base in chunk {
                let size = rng.random_range(2..=3);
                let slot = rng.random_range(0..base.len());
                let mut fills: Vec<char> = letters.iter().copied().filter(|&c| base.chars().nth(slot) != Some(c)).collect();
                fills.shuffle(&mut rng);
                examples.push((base.clone(), Label::Positive));
                for &c in fills.iter().take(size - 1) {
                    let mut v: Vec<char> = base.chars().collect();
                    v[slot] = c;
                    examples.push((v.into_iter().collect(), Label::Negative));
                }
            }
            Corpus::new("3a", format!("planted-{k}"), Source::Synthetic, examples).unwrap()
        })
        .collect();
    Dataset::new(corpora, builtin_rule_spaces()).unwrap()
}

/// The planted strings dealt into corpora of the same sizes at random.
fn shuffled_control(d: &Dataset, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all: Vec<(String, Label)> = d
        .corpora()
        .iter()
        .flat_map(|c| c.examples().iter().map(|e| (e.text.clone(), e.label)))
        .collect();
    all.shuffle(&mut rng);
    let mut rest = all.as_slice();
    let corpora = d
        .corpora()
        .iter()
        .map(|c| {
            let (head, tail) = rest.split_at(c.len());
            rest = tail;
            Corpus::new("3a", c.teacher_id(), Source::Synthetic, head.to_vec()).unwrap()
        })
        .collect();
    Dataset::new(corpora, builtin_rule_spaces()).unwrap()
}

fn planted_structure_holds(d: &Dataset) -> bool {
    let strings: Vec<(usize, usize, &str)> = d
        .corpora()
        .iter()
        .enumerate()
        .flat_map(|(k, c)| {
            let clusters = pedagogy_core::analysis::cluster_corpus(c, 2);
            clusters
                .clusters
                .into_iter()
                .enumerate()
                .flat_map(move |(j, members)| members.into_iter().map(move |p| (k, j, c.examples()[p].text.as_str())))
                .collect::<Vec<_>>()
        })
        .collect();
    d.corpora().iter().all(|c| pedagogy_core::analysis::cluster_corpus(c, 2).len() == 3)
        && strings.iter().all(|&(k1, j1, s1)| {
            strings.iter().all(|&(k2, j2, s2)| {
                let dist = levenshtein(s1, s2);
                if (k1, j1) == (k2, j2) {
                    dist <= 1
                } else {
                    dist > 2
                }
            })
        })
}

fn timed_permutation(d: &Dataset, seed: u64) -> Result<(PermutationTestResult, Duration), String> {
    let start = Instant::now();
    let r = permutation_test_clusters(d, 2, 1000, seed).map_err(|e| e.to_string())?;
    Ok((r, start.elapsed()))
}

fn permutation_discrimination() -> Outcome {
    let planted = planted_dataset(8);
    let control = shuffled_control(&planted, 9);
    let (p, tp) = timed_permutation(&planted, 10)?;
    let (c, tc) = timed_permutation(&control, 10)?;
    let repeat = permutation_test_clusters(&planted, 2, 1000, 10).map_err(|e| e.to_string())?;
    let planted_ok = p.observed_statistic < p.ci_low;
    let control_ok = c.ci_low <= c.observed_statistic && c.observed_statistic <= c.ci_high;
    check(
        planted_structure_holds(&planted)
            && planted_ok
            && control_ok
            && repeat == p
            && tp < Duration::from_secs(60)
            && tc < Duration::from_secs(60),
        format!(
            "planted {:.3} vs CI [{:.3}, {:.3}] ({tp:.2?}); control {:.3} vs CI [{:.3}, {:.3}] ({tc:.2?}); deterministic: {}",
            p.observed_statistic,
            p.ci_low,
            p.ci_high,
            c.observed_statistic,
            c.ci_low,
            c.ci_high,
            repeat == p
        ),
    )
}

fn edit_distance_anchor() -> Outcome {
    let d = levenshtein("12345", "1234");
    check(d == 1, format!("levenshtein(\"12345\", \"1234\") = {d}"))
}

fn floats(v: &serde_json::Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn service_matches_cli() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = dir.path().join("bundled.jsonl");
    let d = Dataset::bundled();
    std::fs::write(&input, d.to_jsonl()).map_err(|e| e.to_string())?;
    let output = Command::new(env!("CARGO_BIN_EXE_pedagogy"))
        .args(["learn", "--input"])
        .arg(&input)
        .output()
        .map_err(|e| e.to_string())?;
    if !output.status.success() {
        return Err(String::from_utf8_lossy(&output.stderr).into_owned());
    }
    let batch: Vec<serde_json::Value> = String::from_utf8(output.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();

    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let app = router(AppState::new(d.clone(), ServiceConfig::default()).map_err(|e| e.to_string())?);
    let call = |method: Method, uri: String, body: serde_json::Value| {
        let app = app.clone();
        rt.block_on(async move {
            let req = Request::builder()
                .method(method)
                .uri(uri)
                .header("content-type", "application/json")
                .body(Body::from(body.to_string()))
                .unwrap();
            let resp = app.oneshot(req).await.unwrap();
            let bytes = resp.into_body().collect().await.unwrap().to_bytes();
            serde_json::from_slice::<serde_json::Value>(&bytes).unwrap()
        })
    };

    let mut mismatches = Vec::new();
    for (c, expected) in d.corpora().iter().zip(&batch) {
        let (space, _) = d.resolve(c.rule_id()).unwrap();
        let created = call(Method::POST, "/sessions".into(), serde_json::json!({ "rule_id": space.name() }));
        let id = created["session_id"].as_str().unwrap().to_string();
        let mut last = serde_json::Value::Null;
        for e in c.examples() {
            last = call(
                Method::POST,
                format!("/sessions/{id}/examples"),
                serde_json::json!({ "text": e.text, "label": e.label }),
            );
        }
        let same = floats(&last["l0"]) == floats(&expected["l0"]["probs"])
            && floats(&last["l1"]) == floats(&expected["l1"]["probs"])
            && last["fallback"] == expected["fallback"];
        if !same {
            mismatches.push(c.teacher_id().to_string());
        }
    }
    check(
        mismatches.is_empty() && batch.len() == d.corpora().len(),
        format!(
            "{} corpora replayed, {} mismatches{}",
            batch.len(),
            mismatches.len(),
            first_failure(&mismatches)
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("matcher agrees with derivative oracle", matcher_vs_derivatives),
        ("learners agree with direct summation", learners_vs_direct_summation),
        ("limit identities", limit_identities),
        ("teacher temperature property", temperature_property),
        ("L1 vs L0 over the default grid", grid_reproduction),
        ("chi-square anchor", chi_square_anchor),
        ("t-statistic anchor", t_statistic_anchor),
        ("permutation test discrimination", permutation_discrimination),
        ("edit-distance anchor", edit_distance_anchor),
        ("service and CLI agree bit-for-bit", service_matches_cli),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2}: PASS: {name} ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2}: FAIL: {name} ({detail})", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
