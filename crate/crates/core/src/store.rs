//! The server store: system data, schema and change log behind a
//! single-writer transactional API.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::changelog::{ActionType, ChangeLog, Timestamp};
use crate::model::{validate_schema, ClassName, Link, ObjectId, Schema, StateValue, SystemData};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mutation {
    CreateObject {
        id: ObjectId,
        class: ClassName,
        state: StateValue,
    },
    UpdateState {
        id: ObjectId,
        state: StateValue,
    },
    DeleteObject {
        id: ObjectId,
    },
    CreateLink(Link),
    DeleteLink(Link),
}

impl Mutation {
    pub fn create(id: &str, class: &str, state: StateValue) -> Self {
        Mutation::CreateObject {
            id: id.into(),
            class: class.into(),
            state,
        }
    }

    pub fn update(id: &str, state: StateValue) -> Self {
        Mutation::UpdateState {
            id: id.into(),
            state,
        }
    }

    pub fn delete(id: &str) -> Self {
        Mutation::DeleteObject { id: id.into() }
    }

    pub fn link(src: &str, assoc: &str, dst: &str) -> Self {
        Mutation::CreateLink(Link::new(src, assoc, dst))
    }

    pub fn unlink(src: &str, assoc: &str, dst: &str) -> Self {
        Mutation::DeleteLink(Link::new(src, assoc, dst))
    }

    /// Commit phase: creates, link creates, updates, link deletes, deletes.
    fn phase(&self) -> u8 {
        match self {
            Mutation::CreateObject { .. } => 0,
            Mutation::CreateLink(_) => 1,
            Mutation::UpdateState { .. } => 2,
            Mutation::DeleteLink(_) => 3,
            Mutation::DeleteObject { .. } => 4,
        }
    }
}

/// Scenario-DSL form of the mutation.
impl fmt::Display for Mutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mutation::CreateObject { id, class, state } => write!(f, "create {id} {class} {state}"),
            Mutation::UpdateState { id, state } => write!(f, "update {id} {state}"),
            Mutation::DeleteObject { id } => write!(f, "delete {id}"),
            Mutation::CreateLink(l) => write!(f, "link {l}"),
            Mutation::DeleteLink(l) => write!(f, "unlink {l}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("unknown id '{0}'")]
    UnknownId(ObjectId),
    #[error("duplicate create of id '{0}'")]
    DuplicateCreate(ObjectId),
    #[error("object '{0}' is already deleted")]
    AlreadyDeleted(ObjectId),
    #[error("unknown class '{0}'")]
    UnknownClass(ClassName),
    #[error("unknown association in link {0}")]
    UnknownAssociation(Link),
    #[error("schema mismatch: link {link} expects {expected_src}-{expected_dst}")]
    SchemaMismatch {
        link: Link,
        expected_src: ClassName,
        expected_dst: ClassName,
    },
    #[error("link {0} already exists")]
    DuplicateLink(Link),
    #[error("link {0} does not exist")]
    UnknownLink(Link),
}

/// Consistent read view of the server: what a sync computation observes.
#[derive(Debug, Clone, Copy)]
pub struct ServerView<'a> {
    pub schema: &'a Schema,
    pub data: &'a SystemData,
    pub log: &'a ChangeLog,
    /// Timestamp of the last committed transaction.
    pub now: Timestamp,
}

#[derive(Debug, Clone)]
pub struct Store {
    schema: Schema,
    data: SystemData,
    log: ChangeLog,
    clock: Timestamp,
    /// Every id ever created; ids are never reissued.
    issued: BTreeSet<ObjectId>,
}

impl Store {
    pub fn new(schema: Schema) -> Self {
        Self {
            schema,
            data: SystemData::new(),
            log: ChangeLog::new(),
            clock: Timestamp::ZERO,
            issued: BTreeSet::new(),
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn data(&self) -> &SystemData {
        &self.data
    }

    pub fn log(&self) -> &ChangeLog {
        &self.log
    }

    pub fn now(&self) -> Timestamp {
        self.clock
    }

    pub fn view(&self) -> ServerView<'_> {
        ServerView {
            schema: &self.schema,
            data: &self.data,
            log: &self.log,
            now: self.clock,
        }
    }

    /// Opens the (only) transaction. The exclusive borrow rules out nesting.
    pub fn begin_transaction(&mut self) -> Transaction<'_> {
        Transaction {
            store: self,
            staged: Vec::new(),
            created: BTreeMap::new(),
            deleted: BTreeSet::new(),
        }
    }

    /// Convenience: stage all of `mutations` and commit them together.
    pub fn apply(
        &mut self,
        mutations: impl IntoIterator<Item = Mutation>,
    ) -> Result<Option<Timestamp>, StoreError> {
        let mut tx = self.begin_transaction();
        for m in mutations {
            tx.stage(m)?;
        }
        tx.commit()
    }
}

/// An open transaction. Dropping it without committing discards the staged
/// mutations.
#[derive(Debug)]
pub struct Transaction<'a> {
    store: &'a mut Store,
    staged: Vec<Mutation>,
    created: BTreeMap<ObjectId, ClassName>,
    deleted: BTreeSet<ObjectId>,
}

impl Transaction<'_> {
    fn class_of(&self, id: &ObjectId) -> Option<&ClassName> {
        self.store
            .data
            .class_of(id)
            .or_else(|| self.created.get(id))
    }

    /// Queues `m`, rejecting what can be rejected before commit. Links may name
    /// objects created later in the same transaction.
    pub fn stage(&mut self, m: Mutation) -> Result<(), StoreError> {
        match &m {
            Mutation::CreateObject { id, class, .. } => {
                if self.store.issued.contains(id) || self.created.contains_key(id) {
                    return Err(StoreError::DuplicateCreate(id.clone()));
                }
                if !self.store.schema.has_class(class) {
                    return Err(StoreError::UnknownClass(class.clone()));
                }
                self.created.insert(id.clone(), class.clone());
            }
            Mutation::UpdateState { id, .. } => {
                if self.class_of(id).is_none() {
                    return Err(self.missing(id));
                }
            }
            Mutation::DeleteObject { id } => {
                if self.deleted.contains(id) {
                    return Err(StoreError::AlreadyDeleted(id.clone()));
                }
                if self.class_of(id).is_none() {
                    return Err(self.missing(id));
                }
                self.deleted.insert(id.clone());
            }
            Mutation::CreateLink(link) | Mutation::DeleteLink(link) => {
                let Some(assoc) = self.store.schema.association(&link.assoc) else {
                    return Err(StoreError::UnknownAssociation(link.clone()));
                };
                let src = self.class_of(&link.src);
                let dst = self.class_of(&link.dst);
                if src.is_some_and(|c| c != &assoc.class_a)
                    || dst.is_some_and(|c| c != &assoc.class_b)
                {
                    return Err(StoreError::SchemaMismatch {
                        link: link.clone(),
                        expected_src: assoc.class_a.clone(),
                        expected_dst: assoc.class_b.clone(),
                    });
                }
            }
        }
        self.staged.push(m);
        Ok(())
    }

    fn missing(&self, id: &ObjectId) -> StoreError {
        if self.store.issued.contains(id) {
            StoreError::AlreadyDeleted(id.clone())
        } else {
            StoreError::UnknownId(id.clone())
        }
    }

    pub fn staged(&self) -> &[Mutation] {
        &self.staged
    }

    /// Validates the batch, then applies it atomically under one new
    /// timestamp. Returns `None` for an empty transaction, which leaves the
    /// clock untouched. On error nothing is applied.
    pub fn commit(self) -> Result<Option<Timestamp>, StoreError> {
        let Transaction {
            store,
            mut staged,
            created,
            ..
        } = self;
        if staged.is_empty() {
            return Ok(None);
        }
        staged.sort_by_key(Mutation::phase);

        let mut next = store.data.clone();
        let ts = store.clock.next();
        let mut log = store.log.clone();
        let mut record = |el: crate::changelog::Element, action| {
            log.record(el, action, ts)
                .expect("commit timestamps are monotonic");
        };

        for m in staged {
            match m {
                Mutation::CreateObject { id, class, state } => {
                    next.put_object(id.clone(), class, state);
                    record(id.into(), ActionType::Create);
                }
                Mutation::CreateLink(link) => {
                    for end in [&link.src, &link.dst] {
                        if !next.contains(end) {
                            return Err(StoreError::UnknownId(end.clone()));
                        }
                    }
                    if !next.links.insert(link.clone()) {
                        return Err(StoreError::DuplicateLink(link));
                    }
                    record(link.into(), ActionType::Create);
                }
                Mutation::UpdateState { id, state } => {
                    next.states.insert(id.clone(), state);
                    record(id.into(), ActionType::Update);
                }
                Mutation::DeleteLink(link) => {
                    if !next.links.remove(&link) {
                        return Err(StoreError::UnknownLink(link));
                    }
                    record(link.into(), ActionType::Delete);
                }
                Mutation::DeleteObject { id } => {
                    for link in next.remove_object(&id) {
                        record(link.into(), ActionType::Delete);
                    }
                    record(id.into(), ActionType::Delete);
                }
            }
        }

        debug_assert!(validate_schema(&store.schema, &next).is_ok());
        store.issued.extend(created.into_keys());
        store.data = next;
        store.log = log;
        store.clock = ts;
        Ok(Some(ts))
    }
}
