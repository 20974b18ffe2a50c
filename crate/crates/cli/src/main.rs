use std::io::{self, BufWriter, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use pedagogy_core::analysis::{
    cluster_contiguity, cluster_corpus, first_in_cluster_polarity, mean_clusters_per_corpus,
    permutation_test_clusters, polarity_balance_test, DEFAULT_THRESHOLD,
};
use pedagogy_core::corpus::{corpus_to_line, load_dataset};
use pedagogy_core::experiment::{
    learn_corpus, run_grid, space_alphabet, summarize, synthesize_corpora, synthetic_extension, write_grid_csv,
    GridSpec, PoolPolicy, SynthesisConfig, BUNDLE_SEED,
};
use pedagogy_core::learners::LearnerParams;
use pedagogy_core::regex::{parse, Alphabet};
use pedagogy_core::{Corpus, Dataset, Label, Regex, Source};
use pedagogy_service::ServiceConfig;

#[derive(Parser)]
#[command(name = "pedagogy", version, about = "Literal and pedagogical learners over regex rule spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the canonical form and description length of a pattern.
    Parse { pattern: String },
    /// Run L0 and L1 on corpora and print one JSON line per corpus.
    Learn(LearnArgs),
    /// Cluster and polarity statistics over a dataset, written as a key-value report.
    Analyze(AnalyzeArgs),
    /// Compare L0 and L1 over an (alpha, log beta) grid.
    Compare(CompareArgs),
    /// Draw weak-sampling corpora for a hypothesis as JSONL.
    Synthesize(SynthesizeArgs),
    /// Run the HTTP session service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct DataArg {
    /// Dataset JSONL; the bundled corpora when omitted.
    #[arg(long, env = "PEDAGOGY_DATA")]
    data: Option<PathBuf>,
}

impl DataArg {
    fn load(&self) -> Result<Dataset> {
        match &self.data {
            Some(p) => load_dataset(p).with_context(|| format!("loading {}", p.display())),
            None => Ok(Dataset::bundled()),
        }
    }
}

#[derive(Args)]
struct LearnArgs {
    #[command(flatten)]
    data: DataArg,
    /// JSONL corpora to learn from (one result per line).
    #[arg(long, conflicts_with = "example")]
    input: Option<PathBuf>,
    /// Rule space or rule id for `--example` corpora.
    #[arg(long, default_value = "3a")]
    rule: String,
    /// An example as TEXT:LABEL (label pos/neg/+/-); repeat in order.
    #[arg(short, long = "example")]
    example: Vec<String>,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    data: DataArg,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: usize,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    data: DataArg,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "1,2,4,8")]
    alphas: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-0.1,-1,-2,-4")]
    log_betas: Vec<f64>,
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    #[arg(long, default_value = "empirical-plus-observed")]
    pool: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Synthetic corpora per untaught hypothesis (empirical-plus-synthetic only).
    #[arg(long, default_value_t = 8)]
    synthetic_per_hypothesis: usize,
    #[arg(long, default_value_t = 13)]
    max_examples: usize,
    #[arg(long, default_value_t = 12)]
    max_len: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthesizeArgs {
    #[command(flatten)]
    data: DataArg,
    /// Rule id (`3a`, `3a:d1`, ...) whose hypothesis labels the strings.
    #[arg(long, required_unless_present = "extend_bundle")]
    rule: Option<String>,
    #[arg(short, long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = BUNDLE_SEED)]
    seed: u64,
    #[arg(long, default_value_t = 13)]
    max_examples: usize,
    #[arg(long, default_value_t = 12)]
    max_len: usize,
    /// Characters to draw from; defaults to the space's alphabet.
    #[arg(long)]
    alphabet: Option<String>,
    /// Print the seed corpora followed by the bundled synthetic extension.
    #[arg(long)]
    extend_bundle: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    data: DataArg,
    #[arg(long, env = "PEDAGOGY_HOST", default_value = "127.0.0.1")]
    host: IpAddr,
    #[arg(long, env = "PEDAGOGY_PORT", default_value_t = 8080)]
    port: u16,
    /// Idle seconds before a session is dropped.
    #[arg(long, env = "PEDAGOGY_IDLE_TIMEOUT", default_value_t = 86_400)]
    idle_timeout: u64,
    /// Append session corpora to this JSONL file.
    #[arg(long, env = "PEDAGOGY_PERSIST")]
    persist: Option<PathBuf>,
    #[arg(long, env = "PEDAGOGY_SUGGEST_MAX_LEN", default_value_t = 3)]
    suggest_max_len: usize,
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(io::stderr)
        .init();
    match Cli::parse().command {
        Command::Parse { pattern } => {
            let ast = parse(&pattern)?;
            println!("{}\t{}", ast.to_pattern(), ast.description_length());
            Ok(())
        }
        Command::Learn(args) => learn(args),
        Command::Analyze(args) => analyze(args),
        Command::Compare(args) => compare(args),
        Command::Synthesize(args) => synthesize(args),
        Command::Serve(args) => serve(args),
    }
}

fn parse_example(s: &str) -> Result<(String, Label)> {
    let (text, label) = s
        .rsplit_once(':')
        .with_context(|| format!("example `{s}` is not TEXT:LABEL"))?;
    Ok((text.to_string(), label.parse()?))
}

fn learn(args: LearnArgs) -> Result<()> {
    let d = args.data.load()?;
    let learner = LearnerParams::new(args.beta, args.eta)?;
    let corpora: Vec<Corpus> = match &args.input {
        Some(path) => load_dataset(path)?.corpora().to_vec(),
        None => {
            let examples = args.example.iter().map(|e| parse_example(e)).collect::<Result<Vec<_>>>()?;
            vec![Corpus::new(&args.rule, "cli", Source::Session, examples)?]
        }
    };
    let mut out = BufWriter::new(io::stdout().lock());
    for c in &corpora {
        let (space, _) = d
            .resolve(c.rule_id())
            .with_context(|| format!("unknown rule `{}`", c.rule_id()))?;
        let outcome = learn_corpus(&d, space.name(), c, args.alpha, learner)?;
        serde_json::to_writer(&mut out, &outcome)?;
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let d = args.data.load()?;
    let mut r = String::new();
    let mut kv = |k: &str, v: String| {
        r.push_str(k);
        r.push_str(" = ");
        r.push_str(&v);
        r.push('\n');
    };
    kv("corpora", d.corpora().len().to_string());
    kv("threshold", args.threshold.to_string());
    kv("seed", args.seed.to_string());
    kv("samples", args.samples.to_string());
    kv("mean_clusters_per_corpus", mean_clusters_per_corpus(&d, args.threshold).to_string());
    match permutation_test_clusters(&d, args.threshold, args.samples, args.seed) {
        Ok(p) => {
            kv("permutation.observed", p.observed_statistic.to_string());
            kv("permutation.ci_low", p.ci_low.to_string());
            kv("permutation.ci_high", p.ci_high.to_string());
            kv("permutation.p_value_below", p.p_value_below.to_string());
        }
        Err(e) => kv("permutation.error", e.to_string()),
    }
    let first = first_in_cluster_polarity(&d, args.threshold);
    kv("first_in_cluster.positive", first.n_first_positive.to_string());
    kv("first_in_cluster.negative", first.n_first_negative.to_string());
    kv("first_in_cluster.chi_square", first.chi_square.to_string());
    let contiguity: Vec<f64> = d
        .corpora()
        .iter()
        .map(|c| cluster_contiguity(&cluster_corpus(c, args.threshold)))
        .collect();
    kv(
        "contiguity.mean",
        (contiguity.iter().sum::<f64>() / contiguity.len() as f64).to_string(),
    );
    let mut rules: Vec<&str> = d.corpora().iter().map(|c| c.rule_id()).collect();
    rules.sort_unstable();
    rules.dedup();
    for rule in rules {
        match polarity_balance_test(&d, rule) {
            Ok(t) => {
                kv(&format!("polarity_balance.{rule}.n"), t.n.to_string());
                kv(&format!("polarity_balance.{rule}.mean_diff"), t.mean_diff.to_string());
                kv(&format!("polarity_balance.{rule}.sd_diff"), t.sd_diff.to_string());
                kv(&format!("polarity_balance.{rule}.t"), t.t_statistic.to_string());
                kv(&format!("polarity_balance.{rule}.df"), t.df.to_string());
            }
            Err(e) => kv(&format!("polarity_balance.{rule}.error"), e.to_string()),
        }
    }
    write_or_print(args.out.as_deref(), &r)
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn compare(args: CompareArgs) -> Result<()> {
    let d = args.data.load()?;
    let spec = GridSpec {
        alphas: args.alphas,
        log_betas: args.log_betas,
        eta: args.eta,
        pool_policy: args.pool.parse::<PoolPolicy>()?,
        seed: args.seed,
        synthesis: SynthesisConfig {
            max_examples: args.max_examples,
            max_len: args.max_len,
            alphabet: None,
        },
        synthetic_per_hypothesis: args.synthetic_per_hypothesis,
    };
    let gr = run_grid(&d, &spec)?;
    std::fs::create_dir_all(&args.out)?;
    write_grid_csv(&gr, &args.out.join("grid.csv"))?;
    let summary = summarize(&gr);
    summary.write(&args.out)?;
    print!("{}", summary.report());
    Ok(())
}

fn synthesize(args: SynthesizeArgs) -> Result<()> {
    let d = args.data.load()?;
    let alphabet = args
        .alphabet
        .as_deref()
        .map(|a| Alphabet::new(a.chars()))
        .transpose()?;
    let synthesis = SynthesisConfig {
        max_examples: args.max_examples,
        max_len: args.max_len,
        alphabet,
    };
    let mut out = BufWriter::new(io::stdout().lock());
    if args.extend_bundle {
        let base = Dataset::seed();
        let extra = synthetic_extension(&base, args.seed, 10, 10, &synthesis)?;
        write!(out, "{}", base.with_corpora(extra)?.to_jsonl())?;
        out.flush()?;
        return Ok(());
    }
    let rule = args.rule.expect("required by clap");
    let (space, index) = d
        .resolve(&rule)
        .with_context(|| format!("unknown rule `{rule}`"))?;
    let r: &Regex = space.hypothesis(index).expect("resolved index");
    let alphabet = synthesis.alphabet.unwrap_or_else(|| space_alphabet(&d, space));
    for c in synthesize_corpora(r, &rule, args.n, args.seed, args.max_examples, args.max_len, &alphabet)? {
        writeln!(out, "{}", corpus_to_line(&c))?;
    }
    out.flush()?;
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let d = args.data.load()?;
    let config = ServiceConfig {
        idle_timeout: Duration::from_secs(args.idle_timeout),
        persist_path: args.persist,
        suggest_max_len: args.suggest_max_len,
    };
    let addr = SocketAddr::new(args.host, args.port);
    tokio::runtime::Runtime::new()?.block_on(pedagogy_service::serve(addr, d, config))?;
    Ok(())
}
