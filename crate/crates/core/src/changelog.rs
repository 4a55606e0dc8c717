//! Per-element action timestamps.
//!
//! Every committed transaction gets one [`Timestamp`]; the log keeps only the
//! latest timestamp per `(element, action)`. Deleting an element collapses its
//! entries into a tombstone holding just the delete timestamp.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::model::{Link, ObjectId};

/// Logical commit time. Zero is the "before any sync" cursor value and is
/// never issued to a transaction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub fn next(self) -> Timestamp {
        Timestamp(self.0 + 1)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActionType {
    Create,
    Update,
    Delete,
}

impl ActionType {
    pub const ALL: [ActionType; 3] = [ActionType::Create, ActionType::Update, ActionType::Delete];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionType::Create => "create",
            ActionType::Update => "update",
            ActionType::Delete => "delete",
        }
    }
}

impl fmt::Display for ActionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Something the log tracks: an object or a link.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Element {
    Object(ObjectId),
    Link(Link),
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Element::Object(id) => id.fmt(f),
            Element::Link(l) => l.fmt(f),
        }
    }
}

impl From<ObjectId> for Element {
    fn from(id: ObjectId) -> Self {
        Element::Object(id)
    }
}

impl From<Link> for Element {
    fn from(l: Link) -> Self {
        Element::Link(l)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Times {
    create: Option<Timestamp>,
    update: Option<Timestamp>,
    delete: Option<Timestamp>,
}

impl Times {
    fn slot(&mut self, action: ActionType) -> &mut Option<Timestamp> {
        match action {
            ActionType::Create => &mut self.create,
            ActionType::Update => &mut self.update,
            ActionType::Delete => &mut self.delete,
        }
    }

    fn get(&self, action: ActionType) -> Option<Timestamp> {
        match action {
            ActionType::Create => self.create,
            ActionType::Update => self.update,
            ActionType::Delete => self.delete,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogError {
    #[error("non-monotonic timestamp {given} (log already at {latest})")]
    NonMonotonic { given: Timestamp, latest: Timestamp },
    #[error("timestamp zero is reserved")]
    ZeroTimestamp,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChangeLog {
    entries: BTreeMap<Element, Times>,
    latest: Timestamp,
}

impl ChangeLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Highest timestamp recorded so far.
    pub fn latest(&self) -> Timestamp {
        self.latest
    }

    /// Records `action` on `element` at `ts`. Timestamps may repeat (one
    /// transaction touches many elements) but never go backwards.
    ///
    /// A delete drops the element's create/update entries. A create on a
    /// tombstoned element (a link re-created with the same triple) clears the
    /// tombstone.
    pub fn record(
        &mut self,
        element: impl Into<Element>,
        action: ActionType,
        ts: Timestamp,
    ) -> Result<(), LogError> {
        if ts == Timestamp::ZERO {
            return Err(LogError::ZeroTimestamp);
        }
        if ts < self.latest {
            return Err(LogError::NonMonotonic {
                given: ts,
                latest: self.latest,
            });
        }
        self.latest = ts;
        let times = self.entries.entry(element.into()).or_default();
        match action {
            ActionType::Delete => {
                *times = Times {
                    delete: Some(ts),
                    ..Times::default()
                };
            }
            ActionType::Create => {
                *times = Times {
                    create: Some(ts),
                    ..Times::default()
                };
            }
            ActionType::Update => {
                *times.slot(action) = Some(ts);
            }
        }
        Ok(())
    }

    /// Recorded timestamp of the last `action` on `element`, if any.
    pub fn ts(&self, element: &Element, action: ActionType) -> Option<Timestamp> {
        self.entries.get(element).and_then(|t| t.get(action))
    }

    pub fn ts_object(&self, id: &ObjectId, action: ActionType) -> Option<Timestamp> {
        self.ts(&Element::Object(id.clone()), action)
    }

    pub fn ts_link(&self, link: &Link, action: ActionType) -> Option<Timestamp> {
        self.ts(&Element::Link(link.clone()), action)
    }

    /// Every tombstoned object and link whose delete timestamp is after `since`,
    /// regardless of who the element was relevant to.
    pub fn deletions_since(&self, since: Timestamp) -> (BTreeSet<ObjectId>, BTreeSet<Link>) {
        let mut objects = BTreeSet::new();
        let mut links = BTreeSet::new();
        for (element, times) in &self.entries {
            if times.delete.is_some_and(|d| d > since) {
                match element {
                    Element::Object(id) => {
                        objects.insert(id.clone());
                    }
                    Element::Link(l) => {
                        links.insert(l.clone());
                    }
                }
            }
        }
        (objects, links)
    }

    /// Number of timestamps currently retained for `element` (0..=3).
    pub fn retained(&self, element: &Element) -> usize {
        self.entries.get(element).map_or(0, |t| {
            [t.create, t.update, t.delete]
                .iter()
                .filter(|x| x.is_some())
                .count()
        })
    }

    pub fn elements(&self) -> impl Iterator<Item = &Element> {
        self.entries.keys()
    }

    /// Canonical dump: `<ts> <action> <element>` lines sorted by timestamp,
    /// then element, then action.
    pub fn dump(&self) -> String {
        let mut rows: Vec<(Timestamp, &Element, ActionType)> = Vec::new();
        for (element, times) in &self.entries {
            for action in ActionType::ALL {
                if let Some(ts) = times.get(action) {
                    rows.push((ts, element, action));
                }
            }
        }
        rows.sort();
        rows.iter()
            .map(|(ts, el, action)| format!("{ts} {action} {el}\n"))
            .collect()
    }
}
