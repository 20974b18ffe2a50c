use std::collections::BTreeSet;

use super::ast::{CharClass, Node, RegexAst};
use super::RegexError;

/// Largest repetition bound accepted in `{n}` / `{n,m}`.
pub const MAX_REPEAT: u32 = 1000;

/// Parses an anchored pattern such as `^a{3,}$` or `^\[.*\]$`.
pub fn parse(pattern: &str) -> Result<RegexAst, RegexError> {
    let mut p = Parser {
        src: pattern,
        chars: pattern.char_indices().collect(),
        pos: 0,
    };
    p.parse_pattern()
}

struct Parser<'a> {
    src: &'a str,
    chars: Vec<(usize, char)>,
    pos: usize,
}

impl Parser<'_> {
    fn offset(&self) -> usize {
        self.chars
            .get(self.pos)
            .map_or(self.src.len(), |&(off, _)| off)
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        Some(c)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, RegexError> {
        self.err_at(self.offset(), message)
    }

    fn err_at<T>(&self, offset: usize, message: impl Into<String>) -> Result<T, RegexError> {
        Err(RegexError::Syntax {
            offset,
            message: message.into(),
        })
    }

    fn parse_pattern(&mut self) -> Result<RegexAst, RegexError> {
        if self.src.is_empty() {
            return self.err("empty pattern");
        }
        if self.peek() != Some('^') {
            return self.err("pattern must start with `^`");
        }
        self.bump();
        let root = self.parse_seq()?;
        match self.peek() {
            Some('$') => {
                self.bump();
                if self.pos != self.chars.len() {
                    return self.err_at(self.offset() - 1, "`$` must end the pattern");
                }
            }
            Some(')') => return self.err("unbalanced `)`"),
            _ => return self.err("pattern must end with `$`"),
        }
        RegexAst::new(root)
    }

    /// Parses atoms until `$`, `)` or end of input; the terminator is left unconsumed.
    fn parse_seq(&mut self) -> Result<Node, RegexError> {
        let mut items: Vec<Node> = Vec::new();
        loop {
            let Some(c) = self.peek() else { break };
            let start = self.offset();
            let atom = match c {
                '$' | ')' => break,
                '.' => {
                    self.bump();
                    Node::AnyChar
                }
                '\\' => self.parse_escape()?,
                '[' => self.parse_class()?,
                '(' => {
                    self.bump();
                    let inner = self.parse_seq()?;
                    if self.peek() != Some(')') {
                        return self.err_at(start, "unbalanced `(`");
                    }
                    self.bump();
                    inner
                }
                '*' | '+' | '?' | '{' => return self.err("quantifier has nothing to repeat"),
                '|' => return self.err("alternation is not supported"),
                '^' => return self.err("`^` is only allowed at the start of the pattern"),
                ']' => return self.err("unbalanced `]`"),
                '}' => return self.err("unbalanced `}`"),
                other => {
                    self.bump();
                    Node::Literal(other)
                }
            };
            let atom = self.parse_quantifier(atom)?;
            if matches!(self.peek(), Some('*' | '+' | '?' | '{')) {
                return self.err("stacked quantifiers are not supported");
            }
            match atom {
                Node::Concat(children) => items.extend(children),
                other => items.push(other),
            }
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            Node::Concat(items)
        })
    }

    fn parse_escape(&mut self) -> Result<Node, RegexError> {
        let start = self.offset();
        self.bump();
        match self.bump() {
            None => self.err_at(start, "dangling `\\`"),
            Some('d') => Ok(Node::Class(CharClass::digits())),
            Some(c) if c.is_ascii_punctuation() || c == ' ' => Ok(Node::Literal(c)),
            Some(c) => self.err_at(start, format!("unsupported escape `\\{c}`")),
        }
    }

    fn parse_class(&mut self) -> Result<Node, RegexError> {
        let start = self.offset();
        self.bump();
        if self.peek() == Some('^') {
            return self.err("negated classes are not supported");
        }
        let mut set = BTreeSet::new();
        let mut first = true;
        loop {
            let item_start = self.offset();
            let lo = match self.bump() {
                None => return self.err_at(start, "unbalanced `[`"),
                Some(']') => break,
                Some('\\') => match self.bump() {
                    None => return self.err_at(start, "unbalanced `[`"),
                    Some('d') => {
                        set.extend('0'..='9');
                        first = false;
                        continue;
                    }
                    Some(c) if c.is_ascii_punctuation() || c == ' ' => c,
                    Some(c) => {
                        return self.err_at(item_start, format!("unsupported escape `\\{c}`"))
                    }
                },
                Some('[') => return self.err_at(item_start, "nested `[` inside a class"),
                Some(c) => c,
            };
            // `-` is a range operator only between two members.
            let is_range = self.peek() == Some('-')
                && !dash_closes_class(&self.chars, self.pos)
                && !(first && lo == '-');
            if is_range {
                self.bump();
                let hi = match self.bump() {
                    None => return self.err_at(start, "unbalanced `[`"),
                    Some('\\') => match self.bump() {
                        Some(c) if c.is_ascii_punctuation() => c,
                        _ => return self.err_at(item_start, "invalid range end"),
                    },
                    Some(c) => c,
                };
                if hi < lo {
                    return self.err_at(item_start, format!("range out of order: {lo}-{hi}"));
                }
                set.extend(lo..=hi);
            } else {
                set.insert(lo);
            }
            first = false;
        }
        if set.is_empty() {
            return self.err_at(start, "empty character class");
        }
        Ok(Node::Class(CharClass::new(set)?))
    }

    fn parse_quantifier(&mut self, atom: Node) -> Result<Node, RegexError> {
        let (min, max) = match self.peek() {
            Some('*') => {
                self.bump();
                (0, None)
            }
            Some('+') => {
                self.bump();
                (1, None)
            }
            Some('?') => {
                self.bump();
                (0, Some(1))
            }
            Some('{') => self.parse_braces()?,
            _ => return Ok(atom),
        };
        Ok(Node::repeat(atom, min, max))
    }

    fn parse_braces(&mut self) -> Result<(u32, Option<u32>), RegexError> {
        let start = self.offset();
        self.bump();
        let min = self
            .parse_number()?
            .map_or_else(|| self.err("expected a number after `{`"), Ok)?;
        let max = match self.bump() {
            Some('}') => Some(min),
            Some(',') => {
                let max = self.parse_number()?;
                if self.bump() != Some('}') {
                    return self.err_at(start, "unbalanced `{`");
                }
                max
            }
            _ => return self.err_at(start, "unbalanced `{`"),
        };
        if let Some(max) = max {
            if max < min {
                return self.err_at(start, format!("repeat bounds out of order: {{{min},{max}}}"));
            }
        }
        Ok((min, max))
    }

    fn parse_number(&mut self) -> Result<Option<u32>, RegexError> {
        let start = self.offset();
        let mut digits = String::new();
        while let Some(c) = self.peek().filter(char::is_ascii_digit) {
            digits.push(c);
            self.bump();
        }
        if digits.is_empty() {
            return Ok(None);
        }
        match digits.parse::<u32>() {
            Ok(n) if n <= MAX_REPEAT => Ok(Some(n)),
            _ => self.err_at(start, format!("repeat bound exceeds {MAX_REPEAT}")),
        }
    }
}

fn dash_closes_class(chars: &[(usize, char)], dash_pos: usize) -> bool {
    matches!(chars.get(dash_pos + 1), Some(&(_, ']')))
}
