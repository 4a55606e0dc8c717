//! Line-oriented scenario files.
//!
//! ```text
//! class Identity
//! assoc Ownership Identity:owner -- Contact:Contact
//! client A root=I1 expr="{user}.Contact.contactIdentity"
//! tx
//!   create I1 Identity {name="ann"}
//!   link I1 Ownership C1
//! end
//! push A update I1 {name="ann b"}
//! sync A
//! sync-oracle A
//! assert-converged A
//! assert-delta A
//!   ts_cs 3
//!   crt-obj C1 Contact {}
//! end
//! ```

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path as FsPath;

use thiserror::Error;

use crate::delta::DeltaSet;
use crate::model::{AssociationDef, Link, ObjectId, Schema, StateValue};
use crate::path::{Direct, PathExpr};
use crate::store::Mutation;
use crate::token::{quote, Cursor, LexError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientSpec {
    pub name: String,
    pub root: ObjectId,
    pub exprs: Vec<PathExpr>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Tx(Vec<Mutation>),
    Sync(String),
    /// Sync through the snapshot-diff algorithm regardless of run mode.
    SyncOracle(String),
    Push(String, Mutation),
    AssertConverged(String),
    /// Compares against the client's most recently delivered delta.
    AssertDelta(String, DeltaSet),
}

impl Step {
    pub fn client(&self) -> Option<&str> {
        match self {
            Step::Tx(_) => None,
            Step::Sync(c)
            | Step::SyncOracle(c)
            | Step::Push(c, _)
            | Step::AssertConverged(c)
            | Step::AssertDelta(c, _) => Some(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub schema: Schema,
    pub clients: Vec<ClientSpec>,
    pub steps: Vec<Step>,
}

impl Scenario {
    pub fn client(&self, name: &str) -> Option<&ClientSpec> {
        self.clients.iter().find(|c| c.name == name)
    }

    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        parse_scenario(text)
    }

    pub fn render(&self) -> String {
        render_scenario(self)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unresolved {what} '{name}'")]
    Unresolved {
        line: usize,
        what: &'static str,
        name: String,
    },
    #[error("no schema block")]
    NoSchema,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub fn load_scenario(path: impl AsRef<FsPath>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text)
}

/// Drops a trailing `#` comment, leaving `#` inside string literals alone.
fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        match c {
            _ if escaped => escaped = false,
            '\\' if in_str => escaped = true,
            '"' => in_str = !in_str,
            '#' if !in_str => return &line[..i],
            _ => {}
        }
    }
    line
}

enum Block {
    Tx(Vec<Mutation>),
    Delta {
        client: String,
        text: String,
        start: usize,
    },
}

struct Parser {
    schema: Schema,
    has_schema: bool,
    clients: Vec<ClientSpec>,
    steps: Vec<Step>,
    created: BTreeSet<ObjectId>,
    line: usize,
}

impl Parser {
    fn syntax(&self, message: impl Into<String>) -> ScenarioError {
        ScenarioError::Syntax {
            line: self.line,
            message: message.into(),
        }
    }

    fn lex(&self, e: LexError) -> ScenarioError {
        self.syntax(format!("column {}: {}", e.pos + 1, e.message))
    }

    fn unresolved(&self, what: &'static str, name: impl ToString) -> ScenarioError {
        ScenarioError::Unresolved {
            line: self.line,
            what,
            name: name.to_string(),
        }
    }

    fn token(&self, c: &mut Cursor, what: &str) -> Result<String, ScenarioError> {
        c.skip_ws();
        c.token(what).map_err(|e| self.lex(e))
    }

    fn finish(&self, c: &mut Cursor) -> Result<(), ScenarioError> {
        c.skip_ws();
        if c.at_end() {
            Ok(())
        } else {
            Err(self.syntax(format!("unexpected '{}'", c.rest())))
        }
    }

    fn require_schema(&self) -> Result<(), ScenarioError> {
        if self.has_schema {
            Ok(())
        } else {
            Err(ScenarioError::NoSchema)
        }
    }

    fn client_name(&self, c: &mut Cursor) -> Result<String, ScenarioError> {
        let name = self.token(c, "client name")?;
        if self.clients.iter().any(|cl| cl.name == name) {
            Ok(name)
        } else {
            Err(self.unresolved("client", name))
        }
    }

    fn object_ref(&self, c: &mut Cursor) -> Result<ObjectId, ScenarioError> {
        let id = ObjectId::from(self.token(c, "object reference")?);
        if self.created.contains(&id) {
            Ok(id)
        } else {
            Err(self.unresolved("object", id))
        }
    }

    fn link(&self, c: &mut Cursor) -> Result<Link, ScenarioError> {
        let src = self.object_ref(c)?;
        let assoc = self.token(c, "association")?;
        if self.schema.association(&assoc.as_str().into()).is_none() {
            return Err(self.unresolved("association", assoc));
        }
        let dst = self.object_ref(c)?;
        Ok(Link::new(src, assoc.as_str(), dst))
    }

    fn mutation(&mut self, c: &mut Cursor) -> Result<Mutation, ScenarioError> {
        let keyword = self.token(c, "mutation")?;
        let m = match keyword.as_str() {
            "create" => {
                let id = ObjectId::from(self.token(c, "object id")?);
                let class = self.token(c, "class")?;
                if !self.schema.has_class(&class.as_str().into()) {
                    return Err(self.unresolved("class", class));
                }
                c.skip_ws();
                let state = if c.at_end() {
                    StateValue::new()
                } else {
                    c.state().map_err(|e| self.lex(e))?
                };
                self.created.insert(id.clone());
                Mutation::CreateObject {
                    id,
                    class: class.as_str().into(),
                    state,
                }
            }
            "update" => {
                let id = self.object_ref(c)?;
                c.skip_ws();
                let state = c.state().map_err(|e| self.lex(e))?;
                Mutation::UpdateState { id, state }
            }
            "delete" => Mutation::DeleteObject {
                id: self.object_ref(c)?,
            },
            "link" => Mutation::CreateLink(self.link(c)?),
            "unlink" => Mutation::DeleteLink(self.link(c)?),
            other => return Err(self.syntax(format!("unknown mutation '{other}'"))),
        };
        self.finish(c)?;
        Ok(m)
    }

    fn check_expr(&self, e: &PathExpr) -> Result<(), ScenarioError> {
        match &e.root {
            Direct::Class(class) | Direct::Filter { class, .. }
                if !self.schema.has_class(class) =>
            {
                return Err(self.unresolved("class", class));
            }
            _ => {}
        }
        match e.segments.iter().find(|r| !self.schema.has_role(r)) {
            Some(role) => Err(self.unresolved("role", role)),
            None => Ok(()),
        }
    }

    fn client(&mut self, c: &mut Cursor) -> Result<(), ScenarioError> {
        let name = self.token(c, "client name")?;
        if self.clients.iter().any(|cl| cl.name == name) {
            return Err(self.syntax(format!("duplicate client '{name}'")));
        }
        let mut root = None;
        let mut exprs = Vec::new();
        loop {
            c.skip_ws();
            if c.at_end() {
                break;
            }
            let key = self.token(c, "root= or expr=")?;
            c.expect('=').map_err(|e| self.lex(e))?;
            match key.as_str() {
                "root" => root = Some(ObjectId::from(self.token(c, "root reference")?)),
                "expr" => {
                    let text = c.quoted().map_err(|e| self.lex(e))?;
                    let e = PathExpr::parse(&text)
                        .map_err(|e| self.syntax(format!("in expression: {e}")))?;
                    self.check_expr(&e)?;
                    exprs.push(e);
                }
                other => return Err(self.syntax(format!("unknown client attribute '{other}'"))),
            }
        }
        let root = root.ok_or_else(|| self.syntax("client needs root=<ref>"))?;
        self.clients.push(ClientSpec { name, root, exprs });
        Ok(())
    }

    fn directive(&mut self, text: &str) -> Result<Option<Block>, ScenarioError> {
        let mut c = Cursor::new(text);
        let keyword = self.token(&mut c, "keyword")?;
        match keyword.as_str() {
            "class" => {
                let name = self.token(&mut c, "class name")?;
                self.finish(&mut c)?;
                self.schema
                    .add_class(name)
                    .map_err(|e| self.syntax(e.to_string()))?;
                self.has_schema = true;
                return Ok(None);
            }
            "assoc" => {
                let name = self.token(&mut c, "association name")?;
                let end = |p: &Self, c: &mut Cursor| -> Result<(String, String), ScenarioError> {
                    let class = p.token(c, "class")?;
                    c.expect(':').map_err(|e| p.lex(e))?;
                    let role = p.token(c, "role")?;
                    Ok((class, role))
                };
                let (ca, ra) = end(self, &mut c)?;
                if c.word().as_deref() != Some("--") {
                    return Err(self.syntax("expected '--' between association ends"));
                }
                let (cb, rb) = end(self, &mut c)?;
                self.finish(&mut c)?;
                if let Some(missing) = [&ca, &cb]
                    .into_iter()
                    .find(|cl| !self.schema.has_class(&cl.as_str().into()))
                {
                    return Err(self.unresolved("class", missing));
                }
                let def = AssociationDef::new(&name, (&ca, &ra), (&cb, &rb));
                self.schema
                    .add_association(def)
                    .map_err(|e| self.syntax(e.to_string()))?;
                return Ok(None);
            }
            _ => self.require_schema()?,
        }
        match keyword.as_str() {
            "client" => self.client(&mut c)?,
            "tx" => {
                self.finish(&mut c)?;
                return Ok(Some(Block::Tx(Vec::new())));
            }
            "assert-delta" => {
                let client = self.client_name(&mut c)?;
                self.finish(&mut c)?;
                return Ok(Some(Block::Delta {
                    client,
                    text: String::new(),
                    start: self.line,
                }));
            }
            "push" => {
                let client = self.client_name(&mut c)?;
                let m = self.mutation(&mut c)?;
                self.steps.push(Step::Push(client, m));
            }
            "sync" | "sync-oracle" | "assert-converged" => {
                let client = self.client_name(&mut c)?;
                self.finish(&mut c)?;
                self.steps.push(match keyword.as_str() {
                    "sync" => Step::Sync(client),
                    "sync-oracle" => Step::SyncOracle(client),
                    _ => Step::AssertConverged(client),
                });
            }
            "end" => return Err(self.syntax("'end' without an open block")),
            other => return Err(self.syntax(format!("unknown keyword '{other}'"))),
        }
        Ok(None)
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut p = Parser {
        schema: Schema::new(),
        has_schema: false,
        clients: Vec::new(),
        steps: Vec::new(),
        created: BTreeSet::new(),
        line: 0,
    };
    let mut block: Option<Block> = None;
    for (i, raw) in text.lines().enumerate() {
        p.line = i + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        block = match block.take() {
            None => p.directive(line)?,
            Some(Block::Tx(ms)) if line == "end" => {
                p.steps.push(Step::Tx(ms));
                None
            }
            Some(Block::Tx(mut ms)) => {
                ms.push(p.mutation(&mut Cursor::new(line))?);
                Some(Block::Tx(ms))
            }
            Some(Block::Delta {
                client,
                text,
                start,
            }) if line == "end" => {
                let delta = DeltaSet::parse(&text).map_err(|e| ScenarioError::Syntax {
                    line: start,
                    message: format!("in expected delta: {e}"),
                })?;
                p.steps.push(Step::AssertDelta(client, delta));
                None
            }
            Some(Block::Delta {
                client,
                mut text,
                start,
            }) => {
                text.push_str(line);
                text.push('\n');
                Some(Block::Delta {
                    client,
                    text,
                    start,
                })
            }
        };
    }
    if block.is_some() {
        return Err(p.syntax("unterminated block (missing 'end')"));
    }
    p.require_schema()?;
    Ok(Scenario {
        schema: p.schema,
        clients: p.clients,
        steps: p.steps,
    })
}

/// Text that parses back to an equal scenario.
pub fn render_scenario(s: &Scenario) -> String {
    let mut out = String::new();
    for class in s.schema.classes() {
        let _ = writeln!(out, "class {class}");
    }
    for a in s.schema.associations() {
        let _ = writeln!(
            out,
            "assoc {} {}:{} -- {}:{}",
            a.name, a.class_a, a.role_a, a.class_b, a.role_b
        );
    }
    for c in &s.clients {
        let _ = write!(out, "client {} root={}", c.name, c.root);
        for e in &c.exprs {
            let _ = write!(out, " expr={}", quote(&e.to_string()));
        }
        out.push('\n');
    }
    for step in &s.steps {
        match step {
            Step::Tx(ms) => {
                out.push_str("tx\n");
                for m in ms {
                    let _ = writeln!(out, "  {m}");
                }
                out.push_str("end\n");
            }
            Step::Sync(c) => {
                let _ = writeln!(out, "sync {c}");
            }
            Step::SyncOracle(c) => {
                let _ = writeln!(out, "sync-oracle {c}");
            }
            Step::Push(c, m) => {
                let _ = writeln!(out, "push {c} {m}");
            }
            Step::AssertConverged(c) => {
                let _ = writeln!(out, "assert-converged {c}");
            }
            Step::AssertDelta(c, d) => {
                let _ = writeln!(out, "assert-delta {c}");
                for line in d.render().lines() {
                    let _ = writeln!(out, "  {line}");
                }
                out.push_str("end\n");
            }
        }
    }
    out
}
