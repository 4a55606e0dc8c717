//! The payload of one sync round and its canonical text form.
//!
//! ```text
//! ts_cs <n>
//! crt-obj <id> <class> {state}
//! upd-obj <id> {state}
//! del-obj <id>
//! crt-link <src> <assoc> <dst>
//! del-link <src> <assoc> <dst>
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::changelog::Timestamp;
use crate::model::{AssocName, ClassName, Link, ObjectId, StateValue};
use crate::token::{self, render_state, Cursor};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeltaSet {
    pub crt_objects: BTreeMap<ObjectId, ClassName>,
    pub upd_objects: BTreeSet<ObjectId>,
    pub del_objects: BTreeSet<ObjectId>,
    pub crt_links: BTreeSet<Link>,
    pub del_links: BTreeSet<Link>,
    /// Current state of every created or updated object.
    pub states: BTreeMap<ObjectId, StateValue>,
    pub ts_cs: Timestamp,
    /// Classes of updated objects, so a replica missing one can create it.
    /// Not part of the canonical text.
    pub upd_classes: BTreeMap<ObjectId, ClassName>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DeltaParseError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("missing ts_cs header")]
    MissingHeader,
}

impl DeltaSet {
    pub fn empty(ts_cs: Timestamp) -> Self {
        Self {
            ts_cs,
            ..Self::default()
        }
    }

    /// True when no element is created, updated or deleted.
    pub fn is_empty(&self) -> bool {
        self.crt_objects.is_empty()
            && self.upd_objects.is_empty()
            && self.del_objects.is_empty()
            && self.crt_links.is_empty()
            && self.del_links.is_empty()
    }

    /// Canonical, sorted rendering.
    pub fn render(&self) -> String {
        render_delta(self)
    }

    pub fn parse(text: &str) -> Result<DeltaSet, DeltaParseError> {
        parse_delta(text)
    }
}

pub fn render_delta(d: &DeltaSet) -> String {
    let mut out = format!("ts_cs {}\n", d.ts_cs);
    let state = |id: &ObjectId| render_state(&d.states.get(id).cloned().unwrap_or_default());
    for (id, class) in &d.crt_objects {
        let _ = writeln!(out, "crt-obj {id} {class} {}", state(id));
    }
    for id in &d.upd_objects {
        let _ = writeln!(out, "upd-obj {id} {}", state(id));
    }
    for id in &d.del_objects {
        let _ = writeln!(out, "del-obj {id}");
    }
    for l in &d.crt_links {
        let _ = writeln!(out, "crt-link {l}");
    }
    for l in &d.del_links {
        let _ = writeln!(out, "del-link {l}");
    }
    out
}

pub fn parse_delta(text: &str) -> Result<DeltaSet, DeltaParseError> {
    let mut d = DeltaSet::default();
    let mut header = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| DeltaParseError::Malformed { line, message };
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut c = Cursor::new(trimmed);
        let keyword = c.word().unwrap_or_default();
        let mut id = |what: &str| -> Result<ObjectId, DeltaParseError> {
            let w = c.word().ok_or_else(|| err(format!("expected {what}")))?;
            if !token::is_token(&w) {
                return Err(err(format!("invalid {what} '{w}'")));
            }
            Ok(ObjectId::from(w))
        };
        match keyword.as_str() {
            "ts_cs" => {
                let n = id("timestamp")?;
                let n = n
                    .as_str()
                    .parse::<u64>()
                    .map_err(|_| err(format!("invalid timestamp '{n}'")))?;
                d.ts_cs = Timestamp(n);
                header = true;
            }
            "crt-obj" => {
                let oid = id("object id")?;
                let class = ClassName::from(id("class")?.as_str());
                let state = parse_trailing_state(&mut c).map_err(err)?;
                d.crt_objects.insert(oid.clone(), class);
                d.states.insert(oid, state);
            }
            "upd-obj" => {
                let oid = id("object id")?;
                let state = parse_trailing_state(&mut c).map_err(err)?;
                d.upd_objects.insert(oid.clone());
                d.states.insert(oid, state);
            }
            "del-obj" => {
                let oid = id("object id")?;
                d.del_objects.insert(oid);
            }
            "crt-link" | "del-link" => {
                let src = id("link source")?;
                let assoc = AssocName::from(id("association")?.as_str());
                let dst = id("link target")?;
                let link = Link { src, assoc, dst };
                if keyword == "crt-link" {
                    d.crt_links.insert(link);
                } else {
                    d.del_links.insert(link);
                }
            }
            other => return Err(err(format!("unknown delta line '{other}'"))),
        }
        if !c.at_end() && !c.rest().trim().is_empty() {
            return Err(err("trailing input".into()));
        }
    }
    if !header {
        return Err(DeltaParseError::MissingHeader);
    }
    Ok(d)
}

fn parse_trailing_state(c: &mut Cursor) -> Result<StateValue, String> {
    c.skip_ws();
    c.state().map_err(|e| e.message)
}
