//! Deterministic lowercase tokenizer.
//!
//! Words are maximal alphanumeric runs; every other non-whitespace character
//! is emitted as a single-character token carrying its punctuation class.
//! The same tokenizer is used for every token count in the crate (block
//! segmentation, digest budgets, scoring), so budgets stay consistent.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

/// Punctuation class of a token. Words and unclassified punctuation are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PunctClass {
    Strong,
    Medium,
    Weak,
    None,
}

impl PunctClass {
    /// Class of a single punctuation character: `. ! ?` strong, `; :` medium,
    /// `,` weak, anything else none.
    pub fn of_char(c: char) -> PunctClass {
        match c {
            '.' | '!' | '?' => PunctClass::Strong,
            ';' | ':' => PunctClass::Medium,
            ',' => PunctClass::Weak,
            _ => PunctClass::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub class: PunctClass,
}

impl Token {
    pub fn word(text: impl Into<String>) -> Token {
        Token {
            text: text.into(),
            class: PunctClass::None,
        }
    }

    pub fn punct(c: char) -> Token {
        Token {
            text: c.to_string(),
            class: PunctClass::of_char(c),
        }
    }
}

/// An ordered sequence of tokens. Dereferences to `[Token]` for slicing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq(Vec<Token>);

impl TokenSeq {
    pub fn new(tokens: Vec<Token>) -> TokenSeq {
        TokenSeq(tokens)
    }

    pub fn as_slice(&self) -> &[Token] {
        &self.0
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|t| t.text.as_str())
    }

    /// Single-space join of the token texts.
    pub fn join(&self) -> String {
        self.texts().collect::<Vec<_>>().join(" ")
    }
}

impl Deref for TokenSeq {
    type Target = [Token];

    fn deref(&self) -> &[Token] {
        &self.0
    }
}

impl<'a> IntoIterator for &'a TokenSeq {
    type Item = &'a Token;
    type IntoIter = std::slice::Iter<'a, Token>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Tokenize text: lowercase, split alphanumeric runs on whitespace and
/// punctuation boundaries, emit punctuation as single-character tokens.
/// Pure: identical input always yields identical output. Empty text gives an
/// empty sequence.
pub fn tokenize(text: &str) -> TokenSeq {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            for lc in c.to_lowercase() {
                word.push(lc);
            }
        } else {
            if !word.is_empty() {
                tokens.push(Token::word(std::mem::take(&mut word)));
            }
            if !c.is_whitespace() {
                tokens.push(Token::punct(c));
            }
        }
    }
    if !word.is_empty() {
        tokens.push(Token::word(word));
    }
    TokenSeq(tokens)
}
