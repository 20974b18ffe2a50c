//! Teaching corpora, hypothesis spaces and the line-delimited dataset format.
//!
//! One corpus is stored per line:
//!
//! ```text
//! {"rule_id": "3a", "teacher_id": "t1", "source": "paper", "examples": [{"text": "aaa", "label": "pos"}]}
//! ```
//!
//! Array order is temporal order. A `rule_id` names either a rule space (its
//! target is being taught) or one of the space's distractors, written
//! `<space>:d<k>` with `k` counting from 1 in distractor order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::regex::{Alphabet, Regex, RegexError};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid data: {0}")]
    Validation(String),
    #[error("unknown rule `{0}`")]
    UnknownRule(String),
    #[error("invalid pattern: {0}")]
    Pattern(#[from] RegexError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "pos")]
    Positive,
    #[serde(rename = "neg")]
    Negative,
}

impl Label {
    pub fn from_match(matched: bool) -> Self {
        if matched {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    pub fn flip(self) -> Self {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Positive => "pos",
            Label::Negative => "neg",
        })
    }
}

impl std::str::FromStr for Label {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pos" | "+" | "positive" => Ok(Label::Positive),
            "neg" | "-" | "negative" => Ok(Label::Negative),
            other => Err(CorpusError::Validation(format!("unknown label `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Paper,
    Synthetic,
    Session,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct LabeledExample {
    pub text: String,
    pub label: Label,
    pub position: usize,
}

/// Strings are restricted to printable ASCII (space through `~`).
pub fn validate_text(text: &str) -> Result<(), CorpusError> {
    match text.chars().find(|c| !(' '..='~').contains(c)) {
        None => Ok(()),
        Some(c) => Err(CorpusError::Validation(format!(
            "string {text:?} contains non-printable-ASCII character {c:?}"
        ))),
    }
}

/// Ordered `(text, label)` sequence; two corpora with equal keys are the
/// same corpus for pool purposes regardless of who taught them.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CorpusKey(Vec<(String, Label)>);

/// One teacher's ordered examples for one rule. Never empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Corpus {
    rule_id: String,
    teacher_id: String,
    source: Source,
    examples: Vec<LabeledExample>,
}

impl Corpus {
    pub fn new<I, S>(
        rule_id: impl Into<String>,
        teacher_id: impl Into<String>,
        source: Source,
        examples: I,
    ) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = (S, Label)>,
        S: Into<String>,
    {
        let examples: Vec<LabeledExample> = examples
            .into_iter()
            .enumerate()
            .map(|(position, (text, label))| LabeledExample {
                text: text.into(),
                label,
                position,
            })
            .collect();
        if examples.is_empty() {
            return Err(CorpusError::Validation(
                "a corpus needs at least one example".into(),
            ));
        }
        examples.iter().try_for_each(|e| validate_text(&e.text))?;
        Ok(Corpus {
            rule_id: rule_id.into(),
            teacher_id: teacher_id.into(),
            source,
            examples,
        })
    }

    pub fn rule_id(&self) -> &str {
        &self.rule_id
    }

    pub fn teacher_id(&self) -> &str {
        &self.teacher_id
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn key(&self) -> CorpusKey {
        CorpusKey(
            self.examples
                .iter()
                .map(|e| (e.text.clone(), e.label))
                .collect(),
        )
    }

    /// Same corpus with examples reordered by `order` (a permutation of positions).
    pub fn reordered(&self, order: &[usize]) -> Result<Corpus, CorpusError> {
        let mut seen = vec![false; self.len()];
        for &i in order {
            if i >= self.len() || std::mem::replace(&mut seen[i], true) {
                return Err(CorpusError::Validation("not a permutation".into()));
            }
        }
        if order.len() != self.len() {
            return Err(CorpusError::Validation("not a permutation".into()));
        }
        Corpus::new(
            self.rule_id.clone(),
            self.teacher_id.clone(),
            self.source,
            order
                .iter()
                .map(|&i| (self.examples[i].text.clone(), self.examples[i].label)),
        )
    }

    /// Copy with one more example appended.
    pub fn extended(&self, text: impl Into<String>, label: Label) -> Result<Corpus, CorpusError> {
        Corpus::new(
            self.rule_id.clone(),
            self.teacher_id.clone(),
            self.source,
            self.examples
                .iter()
                .map(|e| (e.text.clone(), e.label))
                .chain(std::iter::once((text.into(), label))),
        )
    }

    /// `(n_positive, n_negative)`.
    pub fn polarity_counts(&self) -> (usize, usize) {
        let pos = self.examples.iter().filter(|e| e.label.is_positive()).count();
        (pos, self.len() - pos)
    }

    /// Number of examples whose label disagrees with `r`.
    pub fn error_count(&self, r: &Regex) -> usize {
        self.examples
            .iter()
            .filter(|e| r.is_match(&e.text) != e.label.is_positive())
            .count()
    }

    /// Fraction of examples mislabeled with respect to `target`.
    pub fn mislabel_rate(&self, target: &Regex) -> f64 {
        self.error_count(target) as f64 / self.len() as f64
    }

    /// `|c| + Σ|x_i|`, the exponent of the teacher's cost prior.
    pub fn cost(&self) -> usize {
        self.len() + self.examples.iter().map(|e| e.text.chars().count()).sum::<usize>()
    }
}

pub fn polarity_counts(c: &Corpus) -> (usize, usize) {
    c.polarity_counts()
}

pub fn mislabel_rate(c: &Corpus, target: &Regex) -> f64 {
    c.mislabel_rate(target)
}

/// A finite hypothesis set: one target plus distractors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RuleSpace {
    name: String,
    target: Regex,
    distractors: Vec<Regex>,
}

impl RuleSpace {
    pub fn new(
        name: impl Into<String>,
        target: Regex,
        distractors: Vec<Regex>,
    ) -> Result<Self, CorpusError> {
        let name = name.into();
        if name.is_empty() || name.contains(':') {
            return Err(CorpusError::Validation(format!(
                "rule space name {name:?} must be non-empty and contain no `:`"
            )));
        }
        let mut seen = BTreeSet::new();
        for r in std::iter::once(&target).chain(&distractors) {
            if !seen.insert(r.as_str()) {
                return Err(CorpusError::Validation(format!(
                    "duplicate hypothesis {r} in rule space {name}"
                )));
            }
        }
        Ok(RuleSpace {
            name,
            target,
            distractors,
        })
    }

    pub fn from_patterns(name: &str, target: &str, distractors: &[&str]) -> Result<Self, CorpusError> {
        let distractors = distractors
            .iter()
            .map(|p| Regex::new(p))
            .collect::<Result<Vec<_>, _>>()?;
        RuleSpace::new(name, Regex::new(target)?, distractors)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn target(&self) -> &Regex {
        &self.target
    }

    pub fn distractors(&self) -> &[Regex] {
        &self.distractors
    }

    /// Target first, then distractors in order.
    pub fn hypotheses(&self) -> impl Iterator<Item = &Regex> + Clone {
        std::iter::once(&self.target).chain(self.distractors.iter())
    }

    pub fn len(&self) -> usize {
        1 + self.distractors.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn hypothesis(&self, index: usize) -> Option<&Regex> {
        match index {
            0 => Some(&self.target),
            i => self.distractors.get(i - 1),
        }
    }

    pub fn index_of(&self, r: &Regex) -> Option<usize> {
        self.hypotheses().position(|h| h == r)
    }

    /// The rule id under which corpora teaching hypothesis `index` are filed.
    pub fn hypothesis_id(&self, index: usize) -> String {
        match index {
            0 => self.name.clone(),
            i => format!("{}:d{}", self.name, i),
        }
    }

    pub fn description_lengths(&self) -> Vec<usize> {
        self.hypotheses().map(Regex::description_length).collect()
    }

    /// Characters named by any hypothesis' literals or classes.
    pub fn mentioned_chars(&self) -> BTreeSet<char> {
        let mut out = BTreeSet::new();
        self.hypotheses()
            .for_each(|h| h.ast().root().mentioned_chars(&mut out));
        out
    }
}

/// The four rule spaces: each target with its two distractors.
pub fn builtin_rule_spaces() -> BTreeMap<String, RuleSpace> {
    const ROWS: [(&str, &str, [&str; 2]); 4] = [
        ("3a", r"^a{3,}$", [r"^a{6,}$", r"^[aA]+$"]),
        ("zip-code", r"^\d{5}$", [r"^.{5}$", r"^\d+$"]),
        ("suffix-s", r"^.*s$", [r"^.*s.*$", r"^.*[a-z].*$"]),
        ("bracketed", r"^\[.*\]$", [r"^\[.*$", r"^.*\]$"]),
    ];
    ROWS.iter()
        .map(|(name, target, distractors)| {
            let space = RuleSpace::from_patterns(name, target, distractors)
                .expect("built-in patterns are valid");
            (name.to_string(), space)
        })
        .collect()
}

/// Corpora plus the rule spaces their `rule_id`s resolve against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    corpora: Vec<Corpus>,
    rule_spaces: BTreeMap<String, RuleSpace>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusRecord {
    rule_id: String,
    teacher_id: String,
    source: Source,
    examples: Vec<ExampleRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExampleRecord {
    text: String,
    label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    position: Option<usize>,
}

const SEED_CORPORA: &str = include_str!("../data/seed_corpora.jsonl");
const BUNDLED_CORPORA: &str = include_str!("../data/bundled_corpora.jsonl");

impl Dataset {
    pub fn new(
        corpora: Vec<Corpus>,
        rule_spaces: BTreeMap<String, RuleSpace>,
    ) -> Result<Self, CorpusError> {
        if corpora.is_empty() {
            return Err(CorpusError::Validation("no corpora".into()));
        }
        let d = Dataset {
            corpora,
            rule_spaces,
        };
        for c in &d.corpora {
            if d.resolve(c.rule_id()).is_none() {
                return Err(CorpusError::UnknownRule(c.rule_id().to_string()));
            }
        }
        Ok(d)
    }

    /// Parses the line-delimited format against the given rule spaces.
    pub fn parse(
        text: &str,
        rule_spaces: BTreeMap<String, RuleSpace>,
    ) -> Result<Self, CorpusError> {
        let mut corpora = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let record: CorpusRecord =
                serde_json::from_str(line).map_err(|e| CorpusError::Parse {
                    line: line_no,
                    message: e.to_string(),
                })?;
            let corpus = record_to_corpus(record).map_err(|e| match e {
                CorpusError::Validation(m) => {
                    CorpusError::Validation(format!("line {line_no}: {m}"))
                }
                other => other,
            })?;
            corpora.push(corpus);
        }
        Dataset::new(corpora, rule_spaces)
    }

    /// The eight hand-transcribed corpora, resolved against the built-in spaces.
    pub fn seed() -> Self {
        Dataset::parse(SEED_CORPORA, builtin_rule_spaces()).expect("seed data is valid")
    }

    /// Seed corpora plus the synthetic extension used by the grid experiment.
    pub fn bundled() -> Self {
        Dataset::parse(BUNDLED_CORPORA, builtin_rule_spaces()).expect("bundled data is valid")
    }

    pub fn corpora(&self) -> &[Corpus] {
        &self.corpora
    }

    pub fn rule_spaces(&self) -> &BTreeMap<String, RuleSpace> {
        &self.rule_spaces
    }

    pub fn rule_space(&self, name: &str) -> Option<&RuleSpace> {
        self.rule_spaces.get(name)
    }

    /// Resolves a corpus `rule_id` to its space and hypothesis index.
    pub fn resolve(&self, rule_id: &str) -> Option<(&RuleSpace, usize)> {
        let (name, index) = match rule_id.split_once(":d") {
            None => (rule_id, 0),
            Some((name, k)) => {
                let k: usize = k.parse().ok().filter(|&k| k >= 1)?;
                (name, k)
            }
        };
        let space = self.rule_spaces.get(name)?;
        space.hypothesis(index)?;
        Some((space, index))
    }

    /// Corpora teaching any hypothesis of `space`, in file order.
    pub fn corpora_for_space<'a>(&'a self, space: &'a str) -> impl Iterator<Item = &'a Corpus> + 'a {
        self.corpora.iter().filter(move |c| {
            self.resolve(c.rule_id())
                .is_some_and(|(s, _)| s.name() == space)
        })
    }

    /// Keeps only corpora accepted by `keep`; errors if none remain.
    pub fn filtered(&self, keep: impl Fn(&Corpus) -> bool) -> Result<Dataset, CorpusError> {
        Dataset::new(
            self.corpora.iter().filter(|c| keep(c)).cloned().collect(),
            self.rule_spaces.clone(),
        )
    }

    pub fn with_corpora(&self, extra: impl IntoIterator<Item = Corpus>) -> Result<Dataset, CorpusError> {
        Dataset::new(
            self.corpora.iter().cloned().chain(extra).collect(),
            self.rule_spaces.clone(),
        )
    }

    /// Characters of every corpus string plus every hypothesis literal and class member.
    pub fn alphabet(&self) -> Alphabet {
        let mut chars = BTreeSet::new();
        for c in &self.corpora {
            for e in c.examples() {
                chars.extend(e.text.chars());
            }
        }
        for s in self.rule_spaces.values() {
            chars.extend(s.mentioned_chars());
        }
        Alphabet::new(chars).expect("dataset has at least one hypothesis literal or string")
    }

    pub fn to_jsonl(&self) -> String {
        self.corpora.iter().map(|c| corpus_to_line(c) + "\n").collect()
    }
}

fn record_to_corpus(record: CorpusRecord) -> Result<Corpus, CorpusError> {
    for (i, e) in record.examples.iter().enumerate() {
        match e.position {
            Some(p) if p != i => {
                return Err(CorpusError::Validation(format!(
                    "example {i} has position {p}; positions must be 0..n-1 in array order"
                )))
            }
            _ => {}
        }
    }
    Corpus::new(
        record.rule_id,
        record.teacher_id,
        record.source,
        record.examples.into_iter().map(|e| (e.text, e.label)),
    )
}

/// One line of the dataset format (without trailing newline).
pub fn corpus_to_line(c: &Corpus) -> String {
    let record = CorpusRecord {
        rule_id: c.rule_id.clone(),
        teacher_id: c.teacher_id.clone(),
        source: c.source,
        examples: c
            .examples
            .iter()
            .map(|e| ExampleRecord {
                text: e.text.clone(),
                label: e.label,
                position: None,
            })
            .collect(),
    };
    serde_json::to_string(&record).expect("corpus records always serialize")
}

/// Loads a dataset file, resolving rule ids against the built-in spaces.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, CorpusError> {
    let text = fs::read_to_string(path)?;
    Dataset::parse(&text, builtin_rule_spaces())
}

pub fn save_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    fs::write(path, d.to_jsonl())?;
    Ok(())
}
