use std::collections::BTreeSet;

use super::RegexError;

/// A finite, deduplicated, ordered set of characters strings are drawn from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Alphabet {
    chars: Vec<char>,
}

impl Alphabet {
    pub fn new<I: IntoIterator<Item = char>>(chars: I) -> Result<Self, RegexError> {
        let set: BTreeSet<char> = chars.into_iter().collect();
        if set.is_empty() {
            return Err(RegexError::EmptyAlphabet);
        }
        Ok(Alphabet {
            chars: set.into_iter().collect(),
        })
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    /// Every string of length `0..=max_len`, shortest first and in
    /// lexicographic order (by alphabet order) within a length.
    pub fn enumerate_strings(&self, max_len: usize) -> StringEnumerator<'_> {
        StringEnumerator {
            alphabet: &self.chars,
            max_len,
            digits: Some(Vec::new()),
        }
    }
}

/// Iterator returned by [`Alphabet::enumerate_strings`].
#[derive(Debug, Clone)]
pub struct StringEnumerator<'a> {
    alphabet: &'a [char],
    max_len: usize,
    // Indices into `alphabet` for the next string; `None` once exhausted.
    digits: Option<Vec<usize>>,
}

impl Iterator for StringEnumerator<'_> {
    type Item = String;

    fn next(&mut self) -> Option<String> {
        let digits = self.digits.as_mut()?;
        let out: String = digits.iter().map(|&i| self.alphabet[i]).collect();
        // Odometer increment; on overflow move to the next length.
        let mut carry = true;
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < self.alphabet.len() {
                carry = false;
                break;
            }
            *d = 0;
        }
        if carry {
            if digits.len() == self.max_len {
                self.digits = None;
            } else {
                let len = digits.len() + 1;
                *digits = vec![0; len];
            }
        }
        Some(out)
    }
}
