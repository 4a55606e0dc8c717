//! Relevance expressions: a root set followed by role segments.
//!
//! ```text
//! Expr   := Direct ("." Role)*
//! Direct := "{" Ref ("," Ref)* "}" | Class | Class "[" Attr Cmp Literal "]"
//! Cmp    := "=" | "!=" | "<" | ">"
//! ```

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::model::{ClassName, ObjectId, RoleName, Scalar};
use crate::token::{render_scalar, Cursor, LexError};

/// The variable bound to the syncing user's identity.
pub const USER_VAR: &str = "user";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Ref {
    Var(String),
    Id(ObjectId),
}

impl fmt::Display for Ref {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ref::Var(v) => f.write_str(v),
            Ref::Id(id) => id.fmt(f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Comparator {
    Eq,
    Ne,
    Lt,
    Gt,
}

impl Comparator {
    pub fn as_str(self) -> &'static str {
        match self {
            Comparator::Eq => "=",
            Comparator::Ne => "!=",
            Comparator::Lt => "<",
            Comparator::Gt => ">",
        }
    }

    /// Orderings apply to two integers or two strings; any other pairing of
    /// `<`/`>` is false.
    pub fn holds(self, left: &Scalar, right: &Scalar) -> bool {
        match self {
            Comparator::Eq => left == right,
            Comparator::Ne => left != right,
            Comparator::Lt | Comparator::Gt => {
                let ord = match (left, right) {
                    (Scalar::Int(a), Scalar::Int(b)) => a.cmp(b),
                    (Scalar::Str(a), Scalar::Str(b)) => a.cmp(b),
                    _ => return false,
                };
                if self == Comparator::Lt {
                    ord.is_lt()
                } else {
                    ord.is_gt()
                }
            }
        }
    }
}

/// Root of an expression: the zero-length paths it starts from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direct {
    Instances(Vec<Ref>),
    Class(ClassName),
    Filter {
        class: ClassName,
        attr: String,
        cmp: Comparator,
        literal: Scalar,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PathExpr {
    pub root: Direct,
    pub segments: Vec<RoleName>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("syntax error at {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("unknown comparator '{text}' at {pos}")]
    UnknownComparator { pos: usize, text: String },
}

impl From<LexError> for ExprError {
    fn from(e: LexError) -> Self {
        ExprError::Syntax {
            pos: e.pos,
            message: e.message,
        }
    }
}

impl PathExpr {
    pub fn parse(text: &str) -> Result<PathExpr, ExprError> {
        let mut c = Cursor::new(text);
        c.skip_ws();
        let root = parse_direct(&mut c)?;
        let mut segments = Vec::new();
        loop {
            c.skip_ws();
            if c.at_end() {
                break;
            }
            c.expect('.')?;
            c.skip_ws();
            segments.push(RoleName::from(c.token("role name")?));
        }
        Ok(PathExpr { root, segments })
    }

    /// Object ids and variables named by the root.
    pub fn refs(&self) -> &[Ref] {
        match &self.root {
            Direct::Instances(refs) => refs,
            _ => &[],
        }
    }
}

impl FromStr for PathExpr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PathExpr::parse(s)
    }
}

fn parse_ref(c: &mut Cursor) -> Result<Ref, ExprError> {
    let word = c.token("object reference")?;
    Ok(if word == USER_VAR {
        Ref::Var(word)
    } else {
        Ref::Id(ObjectId::from(word))
    })
}

fn parse_direct(c: &mut Cursor) -> Result<Direct, ExprError> {
    if c.eat('{') {
        let mut refs = Vec::new();
        loop {
            c.skip_ws();
            refs.push(parse_ref(c)?);
            c.skip_ws();
            if c.eat('}') {
                return Ok(Direct::Instances(refs));
            }
            c.expect(',')?;
        }
    }
    let class = ClassName::from(c.token("class name or '{'")?);
    c.skip_ws();
    if !c.eat('[') {
        return Ok(Direct::Class(class));
    }
    c.skip_ws();
    let attr = c.token("attribute name")?;
    c.skip_ws();
    let cmp = parse_comparator(c)?;
    c.skip_ws();
    let literal = c.scalar()?;
    c.skip_ws();
    c.expect(']')?;
    Ok(Direct::Filter {
        class,
        attr,
        cmp,
        literal,
    })
}

fn parse_comparator(c: &mut Cursor) -> Result<Comparator, ExprError> {
    let pos = c.pos();
    let is_op = |ch: char| matches!(ch, '=' | '!' | '<' | '>');
    let mut text = String::new();
    while let Some(ch) = c.peek().filter(|ch| is_op(*ch)) {
        text.push(ch);
        c.bump();
    }
    match text.as_str() {
        "=" => Ok(Comparator::Eq),
        "!=" => Ok(Comparator::Ne),
        "<" => Ok(Comparator::Lt),
        ">" => Ok(Comparator::Gt),
        "" => Err(ExprError::Syntax {
            pos,
            message: "expected comparator".into(),
        }),
        _ => Err(ExprError::UnknownComparator { pos, text }),
    }
}

/// Canonical text: no whitespace, instance refs in written order.
impl fmt::Display for PathExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.root {
            Direct::Instances(refs) => {
                f.write_str("{")?;
                for (i, r) in refs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{r}")?;
                }
                f.write_str("}")?;
            }
            Direct::Class(c) => write!(f, "{c}")?,
            Direct::Filter {
                class,
                attr,
                cmp,
                literal,
            } => write!(
                f,
                "{class}[{attr}{}{}]",
                cmp.as_str(),
                render_scalar(literal)
            )?,
        }
        for s in &self.segments {
            write!(f, ".{s}")?;
        }
        Ok(())
    }
}
