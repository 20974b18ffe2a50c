//! The hypothesis language: a small whole-string regular expression dialect.
//!
//! Supported syntax is literals, `.`, `\d`, bracket classes with ranges,
//! non-capturing grouping with `( )`, and the quantifiers `*`, `+`, `?`,
//! `{n}`, `{n,}` and `{n,m}`. Every pattern must be written between `^` and
//! `$`, and matching is always against the whole string.

mod alphabet;
mod ast;
mod nfa;
mod parse;

use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

pub use alphabet::{Alphabet, StringEnumerator};
pub use ast::{CharClass, Node, RegexAst};
pub use nfa::{compile_nfa, Nfa, Simulation};
pub use parse::{parse, MAX_REPEAT};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegexError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("invalid pattern tree: {0}")]
    InvalidAst(String),
    #[error("alphabet must contain at least one character")]
    EmptyAlphabet,
}

/// `r(x)`: whole-string membership.
pub fn matches(ast: &RegexAst, input: &str) -> bool {
    compile_nfa(ast).simulate(input)
}

/// A parsed pattern together with its compiled automaton.
///
/// Identity (`Eq`, `Hash`) is the canonical serialization, not language
/// equivalence: `^\d$` and `^[0-9]$` are equal, `^aa*$` and `^a+$` are not.
#[derive(Debug, Clone)]
pub struct Regex {
    ast: RegexAst,
    nfa: Nfa,
    canonical: String,
}

impl Regex {
    pub fn new(pattern: &str) -> Result<Self, RegexError> {
        parse(pattern).map(Regex::from_ast)
    }

    pub fn from_ast(ast: RegexAst) -> Self {
        let nfa = compile_nfa(&ast);
        let canonical = ast.to_pattern();
        Regex {
            ast,
            nfa,
            canonical,
        }
    }

    pub fn ast(&self) -> &RegexAst {
        &self.ast
    }

    pub fn nfa(&self) -> &Nfa {
        &self.nfa
    }

    pub fn as_str(&self) -> &str {
        &self.canonical
    }

    pub fn is_match(&self, input: &str) -> bool {
        self.nfa.simulate(input)
    }

    pub fn description_length(&self) -> usize {
        self.ast.description_length()
    }
}

impl PartialEq for Regex {
    fn eq(&self, other: &Self) -> bool {
        self.canonical == other.canonical
    }
}

impl Eq for Regex {}

impl Hash for Regex {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.canonical.hash(state);
    }
}

impl fmt::Display for Regex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical)
    }
}

impl FromStr for Regex {
    type Err = RegexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Regex::new(s)
    }
}

impl serde::Serialize for Regex {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.canonical)
    }
}

impl<'de> serde::Deserialize<'de> for Regex {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Regex::new(&s).map_err(serde::de::Error::custom)
    }
}

/// The twelve patterns of the bundled rule spaces, targets first.
pub const BUNDLED_PATTERNS: [&str; 12] = [
    r"^a{3,}$",
    r"^\d{5}$",
    r"^.*s$",
    r"^\[.*\]$",
    r"^a{6,}$",
    r"^[aA]+$",
    r"^.{5}$",
    r"^\d+$",
    r"^.*s.*$",
    r"^.*[a-z].*$",
    r"^\[.*$",
    r"^.*\]$",
];
