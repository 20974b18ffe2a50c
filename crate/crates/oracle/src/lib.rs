//! Slow, obviously-correct reference implementations for cross-checking
//! `pedagogy-core` in tests. Nothing here shares code paths with the
//! production matcher or the log-space learners.

use pedagogy_core::regex::{Node, RegexAst};
use pedagogy_core::{Corpus, Regex, RuleSpace};

/// A regular expression in derivative-friendly form.
#[derive(Debug, Clone, PartialEq)]
enum Re {
    Empty,
    Epsilon,
    Pred(Pred),
    Seq(Box<Re>, Box<Re>),
    Alt(Box<Re>, Box<Re>),
    Star(Box<Re>),
}

#[derive(Debug, Clone, PartialEq)]
enum Pred {
    Char(char),
    Any,
    Set(Vec<char>),
}

fn seq(a: Re, b: Re) -> Re {
    match (a, b) {
        (Re::Empty, _) | (_, Re::Empty) => Re::Empty,
        (Re::Epsilon, b) => b,
        (a, Re::Epsilon) => a,
        (a, b) => Re::Seq(Box::new(a), Box::new(b)),
    }
}

fn alt(a: Re, b: Re) -> Re {
    match (a, b) {
        (Re::Empty, b) => b,
        (a, Re::Empty) => a,
        (a, b) if a == b => a,
        (a, b) => Re::Alt(Box::new(a), Box::new(b)),
    }
}

/// Expands bounded repetition into sequences and alternatives.
fn lower(node: &Node) -> Re {
    match node {
        Node::Literal(c) => Re::Pred(Pred::Char(*c)),
        Node::AnyChar => Re::Pred(Pred::Any),
        Node::Class(cls) => Re::Pred(Pred::Set(cls.chars().collect())),
        Node::Concat(children) => children
            .iter()
            .fold(Re::Epsilon, |acc, child| seq(acc, lower(child))),
        Node::Repeat { node, min, max } => {
            let body = lower(node);
            let required = (0..*min).fold(Re::Epsilon, |acc, _| seq(acc, body.clone()));
            let tail = match max {
                None => Re::Star(Box::new(body)),
                Some(max) => (0..max - min).fold(Re::Epsilon, |acc, _| {
                    alt(Re::Epsilon, seq(body.clone(), acc))
                }),
            };
            seq(required, tail)
        }
    }
}

fn nullable(r: &Re) -> bool {
    match r {
        Re::Empty | Re::Pred(_) => false,
        Re::Epsilon | Re::Star(_) => true,
        Re::Seq(a, b) => nullable(a) && nullable(b),
        Re::Alt(a, b) => nullable(a) || nullable(b),
    }
}

fn derive(r: &Re, c: char) -> Re {
    match r {
        Re::Empty | Re::Epsilon => Re::Empty,
        Re::Pred(p) => {
            let hit = match p {
                Pred::Char(x) => *x == c,
                Pred::Any => true,
                Pred::Set(xs) => xs.contains(&c),
            };
            if hit {
                Re::Epsilon
            } else {
                Re::Empty
            }
        }
        Re::Seq(a, b) => {
            let left = seq(derive(a, c), (**b).clone());
            if nullable(a) {
                alt(left, derive(b, c))
            } else {
                left
            }
        }
        Re::Alt(a, b) => alt(derive(a, c), derive(b, c)),
        Re::Star(a) => seq(derive(a, c), Re::Star(a.clone())),
    }
}

/// Whole-string membership by repeated Brzozowski derivatives.
pub fn derivative_match(ast: &RegexAst, input: &str) -> bool {
    let mut r = lower(ast.root());
    for c in input.chars() {
        r = derive(&r, c);
        if r == Re::Empty {
            return false;
        }
    }
    nullable(&r)
}

/// AST node count by explicit-stack traversal.
pub fn node_count(ast: &RegexAst) -> usize {
    let mut stack = vec![ast.root()];
    let mut n = 0;
    while let Some(node) = stack.pop() {
        n += 1;
        match node {
            Node::Concat(children) => stack.extend(children),
            Node::Repeat { node, .. } => stack.push(node),
            _ => {}
        }
    }
    n
}

fn q(c: &Corpus, r: &Regex) -> usize {
    c.examples()
        .iter()
        .filter(|e| derivative_match(r.ast(), &e.text) != e.label.is_positive())
        .count()
}

fn normalize(w: Vec<f64>) -> Option<Vec<f64>> {
    let z: f64 = w.iter().sum();
    (z > 0.0).then(|| w.into_iter().map(|x| x / z).collect())
}

/// L0 by direct products of `exp`.
pub fn l0(space: &RuleSpace, c: &Corpus, beta: f64) -> Vec<f64> {
    let w = space
        .hypotheses()
        .map(|r| (-(node_count(r.ast()) as f64)).exp() * (-beta * q(c, r) as f64).exp())
        .collect();
    normalize(w).expect("exp weights are positive")
}

/// Unnormalized teacher prior by repeated multiplication.
pub fn teacher_prior(c: &Corpus, r: &Regex, eta: f64) -> f64 {
    let mut score = 0.5f64.powf(c.len() as f64);
    for e in c.examples() {
        score *= 0.5f64.powf(e.text.chars().count() as f64);
        if derivative_match(r.ast(), &e.text) != e.label.is_positive() {
            score *= if eta == 0.0 { 0.0 } else { eta / (1.0 - eta) };
        }
    }
    score
}

/// T1 over `pool` for hypothesis `index`, or `None` if every weight is zero.
pub fn t1(space: &RuleSpace, index: usize, pool: &[Corpus], alpha: f64, beta: f64, eta: f64) -> Option<Vec<f64>> {
    let r = space.hypothesis(index)?;
    let w = pool
        .iter()
        .map(|c| (teacher_prior(c, r, eta) * l0(space, c, beta)[index]).powf(alpha))
        .collect();
    normalize(w)
}

/// L1 for pool member `observed`; `None` where the core falls back to L0.
pub fn l1(space: &RuleSpace, observed: usize, pool: &[Corpus], alpha: f64, beta: f64, eta: f64) -> Option<Vec<f64>> {
    let w = space
        .hypotheses()
        .enumerate()
        .map(|(i, r)| {
            let prior = (-(node_count(r.ast()) as f64)).exp();
            prior * t1(space, i, pool, alpha, beta, eta).map_or(0.0, |d| d[observed])
        })
        .collect();
    normalize(w)
}
