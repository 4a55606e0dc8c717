//! Client-side copy of the relevant data.

use thiserror::Error;

use crate::changelog::Timestamp;
use crate::delta::DeltaSet;
use crate::model::{ClassName, Link, ObjectId, Schema, SystemData};
use crate::path::{select_relevant, Binding, EvalError, PathExpr};
use crate::store::{Mutation, Store, StoreError};
use crate::timestamp::SyncCursor;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplicaError {
    #[error("object {id} already exists as {existing}, delta creates it as {incoming}")]
    ClassConflict {
        id: ObjectId,
        existing: ClassName,
        incoming: ClassName,
    },
    #[error("replica is offline; change not sent")]
    Offline,
    #[error("invalid against the local copy: {0}")]
    Local(StoreError),
    #[error("server rejected the change: {0}")]
    Rejected(StoreError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Things `apply_delta` tolerated rather than failed on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ApplyWarning {
    /// A link create with an endpoint missing after all creates.
    DroppedLink(Link),
    /// An update for an object the replica lacks and whose class is unknown.
    UnknownUpdate(ObjectId),
}

#[derive(Debug, Clone)]
pub struct Replica {
    pub data: SystemData,
    pub cursor: SyncCursor,
    pub exprs: Vec<PathExpr>,
    pub root: ObjectId,
    schema: Schema,
    online: bool,
}

impl Replica {
    pub fn new(schema: Schema, root: ObjectId, exprs: Vec<PathExpr>) -> Self {
        Self {
            data: SystemData::new(),
            cursor: SyncCursor::new(root.clone()),
            exprs,
            root,
            schema,
            online: true,
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn is_online(&self) -> bool {
        self.online
    }

    pub fn set_online(&mut self, online: bool) {
        self.online = online;
    }

    /// Applies `d` and moves the cursor to `d.ts_cs`.
    ///
    /// Creates are upserts and an update of an unknown object creates it.
    /// Deletes of unknown elements are ignored, since deletions are broadcast
    /// to everyone. Order: object creates, link creates, updates, link
    /// deletes, object deletes. A class conflict on create fails before
    /// anything is changed.
    pub fn apply_delta(&mut self, d: &DeltaSet) -> Result<Vec<ApplyWarning>, ReplicaError> {
        for (id, incoming) in d.crt_objects.iter().chain(&d.upd_classes) {
            if let Some(existing) = self.data.class_of(id).filter(|c| *c != incoming) {
                return Err(ReplicaError::ClassConflict {
                    id: id.clone(),
                    existing: existing.clone(),
                    incoming: incoming.clone(),
                });
            }
        }
        let mut warnings = Vec::new();
        let state = |id: &ObjectId| d.states.get(id).cloned().unwrap_or_default();

        for (id, class) in &d.crt_objects {
            self.data.put_object(id.clone(), class.clone(), state(id));
        }
        // Unknown update targets become creates up front so links to them hold.
        for id in &d.upd_objects {
            if !self.data.contains(id) {
                match d.upd_classes.get(id) {
                    Some(class) => self.data.put_object(id.clone(), class.clone(), state(id)),
                    None => warnings.push(ApplyWarning::UnknownUpdate(id.clone())),
                }
            }
        }
        for l in &d.crt_links {
            if self.data.contains(&l.src) && self.data.contains(&l.dst) {
                self.data.links.insert(l.clone());
            } else {
                warnings.push(ApplyWarning::DroppedLink(l.clone()));
            }
        }
        for id in &d.upd_objects {
            if self.data.contains(id) {
                self.data.states.insert(id.clone(), state(id));
            }
        }
        for l in &d.del_links {
            self.data.links.remove(l);
        }
        for id in &d.del_objects {
            self.data.remove_object(id);
        }
        self.cursor.ts_ls = d.ts_cs;
        Ok(warnings)
    }

    /// Drops every object and link that lies on no path of the replica's own
    /// expressions evaluated over its own data. The root is always kept.
    /// Returns the number of objects removed.
    pub fn gc_sweep(&mut self) -> Result<usize, EvalError> {
        let binding = Binding::user(self.root.clone());
        let mut kept = select_relevant(&self.schema, &self.data, &self.exprs, &binding)?.data;
        if let (Some(class), false) = (self.data.class_of(&self.root), kept.contains(&self.root)) {
            let state = self.data.state(&self.root).cloned().unwrap_or_default();
            kept.put_object(self.root.clone(), class.clone(), state);
        }
        let removed = self.data.objects.len() - kept.objects.len();
        self.data = kept;
        Ok(removed)
    }

    /// Applies `m` locally and sends it to the server as its own transaction.
    /// If the server rejects it the local change is rolled back.
    pub fn push_local_change(
        &mut self,
        m: Mutation,
        server: &mut Store,
    ) -> Result<Timestamp, ReplicaError> {
        if !self.online {
            return Err(ReplicaError::Offline);
        }
        let before = self.data.clone();
        apply_local(&self.schema, &mut self.data, &m).map_err(|e| {
            self.data = before.clone();
            ReplicaError::Local(e)
        })?;
        match server.apply([m]) {
            Ok(Some(ts)) => Ok(ts),
            Ok(None) => unreachable!("a one-mutation transaction always commits a timestamp"),
            Err(e) => {
                self.data = before;
                Err(ReplicaError::Rejected(e))
            }
        }
    }
}

fn apply_local(schema: &Schema, data: &mut SystemData, m: &Mutation) -> Result<(), StoreError> {
    match m {
        Mutation::CreateObject { id, class, state } => {
            if data.contains(id) {
                return Err(StoreError::DuplicateCreate(id.clone()));
            }
            if !schema.has_class(class) {
                return Err(StoreError::UnknownClass(class.clone()));
            }
            data.put_object(id.clone(), class.clone(), state.clone());
        }
        Mutation::UpdateState { id, state } => {
            if !data.contains(id) {
                return Err(StoreError::UnknownId(id.clone()));
            }
            data.states.insert(id.clone(), state.clone());
        }
        Mutation::DeleteObject { id } => {
            if !data.contains(id) {
                return Err(StoreError::UnknownId(id.clone()));
            }
            data.remove_object(id);
        }
        Mutation::CreateLink(link) => {
            let Some(assoc) = schema.association(&link.assoc) else {
                return Err(StoreError::UnknownAssociation(link.clone()));
            };
            for end in [&link.src, &link.dst] {
                if !data.contains(end) {
                    return Err(StoreError::UnknownId(end.clone()));
                }
            }
            if data.class_of(&link.src) != Some(&assoc.class_a)
                || data.class_of(&link.dst) != Some(&assoc.class_b)
            {
                return Err(StoreError::SchemaMismatch {
                    link: link.clone(),
                    expected_src: assoc.class_a.clone(),
                    expected_dst: assoc.class_b.clone(),
                });
            }
            if !data.links.insert(link.clone()) {
                return Err(StoreError::DuplicateLink(link.clone()));
            }
        }
        Mutation::DeleteLink(link) => {
            if !data.links.remove(link) {
                return Err(StoreError::UnknownLink(link.clone()));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{social_event_schema, StateValue};
    use crate::path::graph::tests::social_fixture;
    use crate::timestamp::timestamp_sync;

    fn exprs() -> Vec<PathExpr> {
        [
            "{user}.Contact.contactIdentity",
            "{user}.Participation.Event.Participation.Identity",
        ]
        .iter()
        .map(|s| PathExpr::parse(s).unwrap())
        .collect()
    }

    fn replica() -> Replica {
        Replica::new(social_event_schema(), "I1".into(), exprs())
    }

    fn f1_store() -> Store {
        let mut s = Store::new(social_event_schema());
        let fixture = social_fixture();
        s.apply(
            fixture
                .objects
                .iter()
                .map(|(id, c)| Mutation::create(id.as_str(), c.as_str(), StateValue::new())),
        )
        .unwrap();
        s.apply(fixture.links.iter().cloned().map(Mutation::CreateLink))
            .unwrap();
        s
    }

    fn synced(store: &Store) -> Replica {
        let mut r = replica();
        let d = timestamp_sync(&r.cursor, store.view(), &r.exprs).unwrap();
        assert!(r.apply_delta(&d).unwrap().is_empty());
        r.gc_sweep().unwrap();
        r
    }

    #[test]
    fn empty_delta_only_moves_the_cursor() {
        let mut r = replica();
        r.apply_delta(&DeltaSet::empty(Timestamp(4))).unwrap();
        assert!(r.data.is_empty());
        assert_eq!(r.cursor.ts_ls, Timestamp(4));
    }

    #[test]
    fn unknown_deletes_are_ignored() {
        let store = f1_store();
        let mut r = synced(&store);
        let before = r.data.clone();
        let mut d = DeltaSet::empty(Timestamp(9));
        d.del_objects.insert("E9".into());
        d.del_links.insert(Link::new("E9", "Invitation", "P9"));
        assert!(r.apply_delta(&d).unwrap().is_empty());
        assert_eq!(r.data, before);
    }

    #[test]
    fn creates_are_upserts_and_apply_is_idempotent() {
        let store = f1_store();
        let mut r = synced(&store);
        let mut d = DeltaSet::empty(Timestamp(9));
        d.crt_objects.insert("I2".into(), "Identity".into());
        d.states
            .insert("I2".into(), StateValue::new().with("name", "new"));
        r.apply_delta(&d).unwrap();
        let once = r.data.clone();
        r.apply_delta(&d).unwrap();
        assert_eq!(r.data, once);
        assert_eq!(r.data.objects.len(), 8);
        assert_eq!(
            r.data.state(&"I2".into()),
            Some(&StateValue::new().with("name", "new"))
        );
    }

    #[test]
    fn class_conflict_is_an_error_and_changes_nothing() {
        let store = f1_store();
        let mut r = synced(&store);
        let before = r.data.clone();
        let mut d = DeltaSet::empty(Timestamp(9));
        d.crt_objects.insert("C9".into(), "Contact".into());
        d.crt_objects.insert("I2".into(), "Event".into());
        assert!(matches!(
            r.apply_delta(&d),
            Err(ReplicaError::ClassConflict { .. })
        ));
        assert_eq!(r.data, before);
    }

    #[test]
    fn link_with_missing_endpoint_is_dropped() {
        let mut r = replica();
        let mut d = DeltaSet::empty(Timestamp(1));
        d.crt_objects.insert("I1".into(), "Identity".into());
        d.crt_links.insert(Link::new("I1", "Ownership", "C1"));
        let w = r.apply_delta(&d).unwrap();
        assert_eq!(
            w,
            vec![ApplyWarning::DroppedLink(Link::new(
                "I1",
                "Ownership",
                "C1"
            ))]
        );
        assert!(r.data.links.is_empty());
    }

    #[test]
    fn gc_removes_the_dangling_identity() {
        // C1 alone leads to I2 once I2's participation is gone.
        let mut store = f1_store();
        store.apply([Mutation::delete("P2")]).unwrap();
        let mut r = synced(&store);
        assert!(r.data.contains(&"I2".into()));
        store.apply([Mutation::delete("C1")]).unwrap();
        let d = timestamp_sync(&r.cursor, store.view(), &r.exprs).unwrap();
        r.apply_delta(&d).unwrap();
        assert!(r.data.contains(&"I2".into()));
        assert_eq!(r.gc_sweep().unwrap(), 1);
        assert!(!r.data.contains(&"I2".into()));
    }

    #[test]
    fn gc_keeps_objects_reachable_another_way() {
        let mut store = f1_store();
        let mut r = synced(&store);
        store.apply([Mutation::delete("C1")]).unwrap();
        let d = timestamp_sync(&r.cursor, store.view(), &r.exprs).unwrap();
        r.apply_delta(&d).unwrap();
        assert_eq!(r.gc_sweep().unwrap(), 0);
        assert!(r.data.contains(&"I2".into()));
    }

    #[test]
    fn gc_keeps_the_root_and_is_a_fixed_point() {
        let mut r = replica();
        r.data
            .put_object("I1".into(), "Identity".into(), StateValue::new());
        r.data
            .put_object("E5".into(), "Event".into(), StateValue::new());
        assert_eq!(r.gc_sweep().unwrap(), 1);
        assert!(r.data.contains(&"I1".into()));
        assert_eq!(r.gc_sweep().unwrap(), 0);
    }

    #[test]
    fn push_reaches_the_server() {
        let mut store = f1_store();
        let mut r = synced(&store);
        let s = StateValue::new().with("name", "me");
        let ts = r
            .push_local_change(Mutation::update("I1", s.clone()), &mut store)
            .unwrap();
        assert_eq!(ts, store.now());
        assert_eq!(store.data().state(&"I1".into()), Some(&s));
        assert_eq!(r.data.state(&"I1".into()), Some(&s));
    }

    #[test]
    fn rejected_push_rolls_back() {
        let mut store = f1_store();
        let mut r = synced(&store);
        store.apply([Mutation::delete("P3")]).unwrap();
        let before = r.data.clone();
        let err = r.push_local_change(Mutation::update("P3", StateValue::new()), &mut store);
        assert!(matches!(err, Err(ReplicaError::Rejected(_))));
        assert_eq!(r.data, before);
        assert!(matches!(
            r.push_local_change(Mutation::delete("X1"), &mut store),
            Err(ReplicaError::Local(_))
        ));
    }

    #[test]
    fn offline_push_is_refused() {
        let mut store = f1_store();
        let mut r = synced(&store);
        r.set_online(false);
        let now = store.now();
        assert_eq!(
            r.push_local_change(Mutation::update("I1", StateValue::new()), &mut store),
            Err(ReplicaError::Offline)
        );
        assert_eq!(store.now(), now);
    }
}
