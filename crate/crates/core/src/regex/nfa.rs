//! Thompson construction and state-set simulation.

use super::ast::{CharClass, Node, RegexAst};

type StateId = usize;

#[derive(Debug, Clone)]
enum Step {
    Literal(char),
    Any,
    Class(CharClass),
}

impl Step {
    fn accepts(&self, c: char) -> bool {
        match self {
            Step::Literal(l) => *l == c,
            Step::Any => true,
            Step::Class(cls) => cls.contains(c),
        }
    }
}

#[derive(Debug, Clone)]
enum State {
    Consume(Step, StateId),
    Split(StateId, StateId),
    Epsilon(StateId),
    Match,
}

/// A compiled automaton for one pattern.
#[derive(Debug, Clone)]
pub struct Nfa {
    states: Vec<State>,
    start: StateId,
}

/// Outcome of running an [`Nfa`] over one input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Simulation {
    pub matched: bool,
    /// Number of state-set frontiers built, at most `input.chars().count() + 1`.
    pub frontiers: usize,
}

pub fn compile_nfa(ast: &RegexAst) -> Nfa {
    let mut states = vec![State::Match];
    let start = compile(&mut states, ast.root(), 0);
    Nfa { states, start }
}

// Compiles `node` so that on success it continues at `next`; returns the entry state.
fn compile(states: &mut Vec<State>, node: &Node, next: StateId) -> StateId {
    let push = |states: &mut Vec<State>, s: State| {
        states.push(s);
        states.len() - 1
    };
    match node {
        Node::Literal(c) => push(states, State::Consume(Step::Literal(*c), next)),
        Node::AnyChar => push(states, State::Consume(Step::Any, next)),
        Node::Class(cls) => push(states, State::Consume(Step::Class(cls.clone()), next)),
        Node::Concat(children) if children.is_empty() => push(states, State::Epsilon(next)),
        Node::Concat(children) => children
            .iter()
            .rev()
            .fold(next, |next, child| compile(states, child, next)),
        Node::Repeat { node, min, max } => {
            let mut entry = match max {
                None => {
                    let split = push(states, State::Split(0, next));
                    let body = compile(states, node, split);
                    states[split] = State::Split(body, next);
                    split
                }
                Some(max) => {
                    let mut entry = next;
                    for _ in *min..*max {
                        let body = compile(states, node, entry);
                        entry = push(states, State::Split(body, next));
                    }
                    entry
                }
            };
            for _ in 0..*min {
                entry = compile(states, node, entry);
            }
            entry
        }
    }
}

impl Nfa {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn simulate(&self, input: &str) -> bool {
        self.run(input).matched
    }

    pub fn run(&self, input: &str) -> Simulation {
        let mut seen = vec![usize::MAX; self.states.len()];
        let mut stack = Vec::new();
        let mut current = Vec::new();
        let mut next = Vec::new();
        let mut generation = 0;
        self.close(self.start, generation, &mut seen, &mut stack, &mut current);
        let mut frontiers = 1;
        for c in input.chars() {
            if current.is_empty() {
                break;
            }
            generation += 1;
            next.clear();
            for &id in &current {
                if let State::Consume(step, to) = &self.states[id] {
                    if step.accepts(c) {
                        self.close(*to, generation, &mut seen, &mut stack, &mut next);
                    }
                }
            }
            std::mem::swap(&mut current, &mut next);
            frontiers += 1;
        }
        let exhausted = frontiers == input.chars().count() + 1;
        Simulation {
            matched: exhausted && current.iter().any(|&id| matches!(self.states[id], State::Match)),
            frontiers,
        }
    }

    // Adds the epsilon closure of `from` to `out`, keeping only consuming and match states.
    fn close(
        &self,
        from: StateId,
        generation: usize,
        seen: &mut [usize],
        stack: &mut Vec<StateId>,
        out: &mut Vec<StateId>,
    ) {
        stack.push(from);
        while let Some(id) = stack.pop() {
            if seen[id] == generation {
                continue;
            }
            seen[id] = generation;
            match &self.states[id] {
                State::Split(a, b) => {
                    stack.push(*b);
                    stack.push(*a);
                }
                State::Epsilon(to) => stack.push(*to),
                State::Consume(..) | State::Match => out.push(id),
            }
        }
    }
}
