//! Lexical helpers shared by the expression parser, the scenario DSL and the
//! canonical text renderings.

use std::fmt::Write as _;

use crate::model::{Scalar, StateValue};

/// Characters that may never appear inside a name or id token.
const RESERVED: &[char] = &[
    '.', '{', '}', '[', ']', ',', '=', '"', '#', ':', '<', '>', '!',
];

/// True when `s` is usable as a class, role, association, attribute or object id.
pub fn is_token(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| !c.is_whitespace() && !RESERVED.contains(&c))
}

pub(crate) fn is_token_char(c: char) -> bool {
    !c.is_whitespace() && !RESERVED.contains(&c)
}

pub(crate) fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

pub(crate) fn render_scalar(v: &Scalar) -> String {
    match v {
        Scalar::Str(s) => quote(s),
        Scalar::Int(i) => i.to_string(),
        Scalar::Bool(b) => b.to_string(),
    }
}

/// Canonical `{k=v,...}` rendering with keys in sorted order.
pub(crate) fn render_state(state: &StateValue) -> String {
    let mut out = String::from("{");
    for (i, (k, v)) in state.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{k}={}", render_scalar(v));
    }
    out.push('}');
    out
}

/// Error produced by [`Cursor`]; `pos` is a character offset into the input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct LexError {
    pub pos: usize,
    pub message: String,
}

impl LexError {
    fn new(pos: usize, message: impl Into<String>) -> Self {
        Self {
            pos,
            message: message.into(),
        }
    }
}

/// A small character cursor over one line or expression.
pub(crate) struct Cursor {
    chars: Vec<char>,
    pos: usize,
}

impl Cursor {
    pub fn new(src: &str) -> Self {
        Self {
            chars: src.chars().collect(),
            pos: 0,
        }
    }

    pub fn pos(&self) -> usize {
        self.pos
    }

    pub fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    pub fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        Some(c)
    }

    pub fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.chars.len()
    }

    pub fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn expect(&mut self, c: char) -> Result<(), LexError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(format!("expected '{c}'")))
        }
    }

    pub fn error(&self, message: impl Into<String>) -> LexError {
        LexError::new(self.pos, message)
    }

    /// Reads a maximal run of token characters; fails when the run is empty.
    pub fn token(&mut self, what: &str) -> Result<String, LexError> {
        let start = self.pos;
        while self.peek().is_some_and(is_token_char) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(LexError::new(start, format!("expected {what}")));
        }
        Ok(self.chars[start..self.pos].iter().collect())
    }

    /// Reads a whitespace-delimited word (any characters but whitespace).
    pub fn word(&mut self) -> Option<String> {
        self.skip_ws();
        let start = self.pos;
        while self.peek().is_some_and(|c| !c.is_whitespace()) {
            self.pos += 1;
        }
        (start != self.pos).then(|| self.chars[start..self.pos].iter().collect())
    }

    pub fn rest(&mut self) -> String {
        let s = self.chars[self.pos..].iter().collect();
        self.pos = self.chars.len();
        s
    }

    pub fn quoted(&mut self) -> Result<String, LexError> {
        self.expect('"')?;
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return Err(self.error("unterminated string literal")),
                Some('"') => return Ok(out),
                Some('\\') => match self.bump() {
                    Some('"') => out.push('"'),
                    Some('\\') => out.push('\\'),
                    Some('n') => out.push('\n'),
                    _ => return Err(self.error("invalid escape in string literal")),
                },
                Some(c) => out.push(c),
            }
        }
    }

    pub fn scalar(&mut self) -> Result<Scalar, LexError> {
        match self.peek() {
            Some('"') => Ok(Scalar::Str(self.quoted()?)),
            Some(c) if c == '-' || c.is_ascii_digit() => {
                let start = self.pos;
                self.pos += 1;
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
                let text: String = self.chars[start..self.pos].iter().collect();
                text.parse::<i64>()
                    .map(Scalar::Int)
                    .map_err(|_| LexError::new(start, format!("invalid integer literal '{text}'")))
            }
            Some(c) if c.is_alphabetic() => {
                let start = self.pos;
                let word = self.token("literal")?;
                match word.as_str() {
                    "true" => Ok(Scalar::Bool(true)),
                    "false" => Ok(Scalar::Bool(false)),
                    _ => Err(LexError::new(start, format!("invalid literal '{word}'"))),
                }
            }
            _ => Err(self.error("expected literal")),
        }
    }

    /// Parses `{k=v,...}`; whitespace is allowed between items.
    pub fn state(&mut self) -> Result<StateValue, LexError> {
        self.expect('{')?;
        let mut state = StateValue::new();
        self.skip_ws();
        if self.eat('}') {
            return Ok(state);
        }
        loop {
            self.skip_ws();
            let key_pos = self.pos;
            let key = self.token("attribute name")?;
            self.skip_ws();
            self.expect('=')?;
            self.skip_ws();
            let value = self.scalar()?;
            if state.insert(key.clone(), value).is_some() {
                return Err(LexError::new(
                    key_pos,
                    format!("duplicate attribute '{key}'"),
                ));
            }
            self.skip_ws();
            if self.eat('}') {
                return Ok(state);
            }
            self.expect(',')?;
        }
    }
}
