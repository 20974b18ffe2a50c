//! Regex hypothesis spaces, literal and pedagogical learners over labeled
//! example corpora, corpus analysis, and the grid comparison between them.

pub mod analysis;
pub mod corpus;
pub mod experiment;
pub mod learners;
pub mod prob;
pub mod regex;

pub use corpus::{Corpus, CorpusError, Dataset, Label, LabeledExample, RuleSpace, Source};
pub use learners::{LearnerError, LearnerParams, PosteriorDistribution, TeacherParams};
pub use regex::{Regex, RegexError};
