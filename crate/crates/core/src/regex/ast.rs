use std::collections::BTreeSet;
use std::fmt;

use super::RegexError;

/// A non-empty explicit set of characters, as written with `\d`, `[a-z]` or `[aA]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CharClass(BTreeSet<char>);

impl CharClass {
    pub fn new<I: IntoIterator<Item = char>>(chars: I) -> Result<Self, RegexError> {
        let set: BTreeSet<char> = chars.into_iter().collect();
        if set.is_empty() {
            return Err(RegexError::InvalidAst("character class is empty".into()));
        }
        Ok(CharClass(set))
    }

    /// The `\d` class.
    pub fn digits() -> Self {
        CharClass(('0'..='9').collect())
    }

    pub fn contains(&self, c: char) -> bool {
        self.0.contains(&c)
    }

    pub fn chars(&self) -> impl Iterator<Item = char> + '_ {
        self.0.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn is_digits(&self) -> bool {
        self.0.len() == 10 && self.0.iter().copied().eq('0'..='9')
    }
}

/// One node of a parsed pattern.
///
/// Patterns are implicitly anchored at both ends, so there are no anchor
/// nodes: the parser requires and consumes the surface `^` and `$`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Node {
    Literal(char),
    AnyChar,
    Class(CharClass),
    Concat(Vec<Node>),
    Repeat {
        node: Box<Node>,
        min: u32,
        /// `None` is unbounded.
        max: Option<u32>,
    },
}

impl Node {
    pub fn repeat(node: Node, min: u32, max: Option<u32>) -> Node {
        Node::Repeat {
            node: Box::new(node),
            min,
            max,
        }
    }

    /// Number of nodes in the tree rooted here. A class counts once no
    /// matter how many characters it holds.
    pub fn size(&self) -> usize {
        match self {
            Node::Literal(_) | Node::AnyChar | Node::Class(_) => 1,
            Node::Concat(children) => 1 + children.iter().map(Node::size).sum::<usize>(),
            Node::Repeat { node, .. } => 1 + node.size(),
        }
    }

    /// Every character named by a literal or class in the tree, in tree order.
    pub fn mentioned_chars(&self, out: &mut BTreeSet<char>) {
        match self {
            Node::Literal(c) => {
                out.insert(*c);
            }
            Node::AnyChar => {}
            Node::Class(cls) => out.extend(cls.chars()),
            Node::Concat(children) => children.iter().for_each(|n| n.mentioned_chars(out)),
            Node::Repeat { node, .. } => node.mentioned_chars(out),
        }
    }

    fn validate(&self) -> Result<(), RegexError> {
        match self {
            Node::Literal(_) | Node::AnyChar => Ok(()),
            Node::Class(cls) if cls.is_empty() => {
                Err(RegexError::InvalidAst("character class is empty".into()))
            }
            Node::Class(_) => Ok(()),
            Node::Concat(children) => children.iter().try_for_each(Node::validate),
            Node::Repeat { node, min, max } => {
                if let Some(max) = max {
                    if min > max {
                        return Err(RegexError::InvalidAst(format!(
                            "repeat bounds out of order: {{{min},{max}}}"
                        )));
                    }
                }
                node.validate()
            }
        }
    }

    fn needs_group(&self) -> bool {
        matches!(self, Node::Concat(_) | Node::Repeat { .. })
    }
}

/// A parsed, validated pattern from the restricted whole-string regex language.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RegexAst {
    root: Node,
}

impl RegexAst {
    pub fn new(root: Node) -> Result<Self, RegexError> {
        root.validate()?;
        Ok(RegexAst { root })
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// `|r|`: the node count of the tree.
    pub fn description_length(&self) -> usize {
        self.root.size()
    }

    /// Canonical surface form, anchors included.
    pub fn to_pattern(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for RegexAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("^")?;
        write_node(f, &self.root)?;
        f.write_str("$")
    }
}

const SPECIAL: &[char] = &[
    '\\', '.', '*', '+', '?', '{', '}', '[', ']', '(', ')', '|', '^', '$',
];
const CLASS_SPECIAL: &[char] = &['\\', ']', '[', '^', '-'];

fn write_node(f: &mut fmt::Formatter<'_>, node: &Node) -> fmt::Result {
    match node {
        Node::Literal(c) => {
            if SPECIAL.contains(c) {
                f.write_str("\\")?;
            }
            write!(f, "{c}")
        }
        Node::AnyChar => f.write_str("."),
        Node::Class(cls) => write_class(f, cls),
        Node::Concat(children) => children.iter().try_for_each(|n| write_node(f, n)),
        Node::Repeat { node, min, max } => {
            if node.needs_group() {
                f.write_str("(")?;
                write_node(f, node)?;
                f.write_str(")")?;
            } else {
                write_node(f, node)?;
            }
            match (*min, *max) {
                (0, None) => f.write_str("*"),
                (1, None) => f.write_str("+"),
                (0, Some(1)) => f.write_str("?"),
                (n, None) => write!(f, "{{{n},}}"),
                (n, Some(m)) if n == m => write!(f, "{{{n}}}"),
                (n, Some(m)) => write!(f, "{{{n},{m}}}"),
            }
        }
    }
}

fn write_class(f: &mut fmt::Formatter<'_>, cls: &CharClass) -> fmt::Result {
    if cls.is_digits() {
        return f.write_str("\\d");
    }
    let write_one = |f: &mut fmt::Formatter<'_>, c: char| {
        if CLASS_SPECIAL.contains(&c) {
            f.write_str("\\")?;
        }
        write!(f, "{c}")
    };
    f.write_str("[")?;
    // Lowercase letters, then uppercase, then digits, then the rest.
    let mut chars: Vec<char> = cls.chars().collect();
    chars.sort_by_key(|&c| {
        let group = match c {
            'a'..='z' => 0,
            'A'..='Z' => 1,
            '0'..='9' => 2,
            _ => 3,
        };
        (group, c)
    });
    let mut i = 0;
    while i < chars.len() {
        let mut j = i;
        while j + 1 < chars.len() && chars[j + 1] as u32 == chars[j] as u32 + 1 {
            j += 1;
        }
        if j - i >= 2 {
            write_one(f, chars[i])?;
            f.write_str("-")?;
            write_one(f, chars[j])?;
        } else {
            for &c in &chars[i..=j] {
                write_one(f, c)?;
            }
        }
        i = j + 1;
    }
    f.write_str("]")
}
