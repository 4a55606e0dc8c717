//! Snapshot-diff change finder. Stores a full copy of the server data at each
//! sync and diffs the relevant data of the old and new copies. Expensive by
//! design; it exists as the reference the timestamp algorithm is tested against.

use std::collections::{BTreeMap, BTreeSet};

use crate::changelog::Timestamp;
use crate::delta::DeltaSet;
use crate::model::{ObjectId, Schema, StateValue, SystemData};
use crate::path::{select_relevant, Binding, EvalError, PathExpr};
use crate::store::ServerView;

/// Members of `now` absent from `prev`.
pub fn get_set_crt<T: Ord + Clone>(prev: &BTreeSet<T>, now: &BTreeSet<T>) -> BTreeSet<T> {
    now.difference(prev).cloned().collect()
}

/// Members of `prev` absent from `now`.
pub fn get_set_del<T: Ord + Clone>(prev: &BTreeSet<T>, now: &BTreeSet<T>) -> BTreeSet<T> {
    prev.difference(now).cloned().collect()
}

/// Members of both sets whose state differs between the two state maps.
pub fn get_set_upd<T: Ord + Clone, S: PartialEq>(
    prev: &BTreeSet<T>,
    now: &BTreeSet<T>,
    state_prev: &BTreeMap<T, S>,
    state_now: &BTreeMap<T, S>,
) -> BTreeSet<T> {
    now.intersection(prev)
        .filter(|i| state_prev.get(i) != state_now.get(i))
        .cloned()
        .collect()
}

/// Per-key history of server snapshots taken at sync time.
#[derive(Debug, Clone)]
pub struct SnapshotStore<K = ObjectId> {
    history: BTreeMap<K, Vec<(SystemData, Timestamp)>>,
}

impl<K> Default for SnapshotStore<K> {
    fn default() -> Self {
        Self {
            history: BTreeMap::new(),
        }
    }
}

impl<K: Ord> SnapshotStore<K> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_snapshot(&mut self, key: K, data: SystemData, ts: Timestamp) {
        self.history.entry(key).or_default().push((data, ts));
    }

    pub fn latest(&self, key: &K) -> Option<&(SystemData, Timestamp)> {
        self.history.get(key).and_then(|h| h.last())
    }

    pub fn syncs(&self, key: &K) -> usize {
        self.history.get(key).map_or(0, Vec::len)
    }
}

/// The delta between the relevant data of two server snapshots.
pub fn oracle_delta(
    schema: &Schema,
    prev: &SystemData,
    now: &SystemData,
    exprs: &[PathExpr],
    user: &ObjectId,
    ts_cs: Timestamp,
) -> Result<DeltaSet, EvalError> {
    let binding = Binding::user(user.clone());
    let r_prev = select_relevant(schema, prev, exprs, &binding)?.data;
    let r_now = select_relevant(schema, now, exprs, &binding)?.data;
    Ok(diff_relevant(&r_prev, &r_now, ts_cs))
}

/// The five delta sets between two relevant data sets, with states of
/// created and updated objects taken from `now`.
pub fn diff_relevant(prev: &SystemData, now: &SystemData, ts_cs: Timestamp) -> DeltaSet {
    let o_prev: BTreeSet<ObjectId> = prev.objects.keys().cloned().collect();
    let o_now: BTreeSet<ObjectId> = now.objects.keys().cloned().collect();

    let mut d = DeltaSet::empty(ts_cs);
    for id in get_set_crt(&o_prev, &o_now) {
        d.crt_objects.insert(id.clone(), now.objects[&id].clone());
    }
    d.upd_objects = get_set_upd(&o_prev, &o_now, &prev.states, &now.states);
    d.del_objects = get_set_del(&o_prev, &o_now);
    d.crt_links = get_set_crt(&prev.links, &now.links);
    d.del_links = get_set_del(&prev.links, &now.links);
    for id in d.crt_objects.keys().chain(&d.upd_objects) {
        d.states
            .insert(id.clone(), now.state(id).cloned().unwrap_or_default());
    }
    for id in &d.upd_objects {
        d.upd_classes.insert(id.clone(), now.objects[id].clone());
    }
    d
}

/// Runs the snapshot diff for `key` against its previous snapshot (empty on
/// the first sync) and stores the current server data as the new snapshot.
/// `ts_cs` is the server's current timestamp.
pub fn oracle_sync<K: Ord>(
    snapshots: &mut SnapshotStore<K>,
    key: K,
    user: &ObjectId,
    view: ServerView<'_>,
    exprs: &[PathExpr],
) -> Result<DeltaSet, EvalError> {
    let empty = SystemData::new();
    let prev = snapshots.latest(&key).map_or(&empty, |(d, _)| d);
    let delta = oracle_delta(view.schema, prev, view.data, exprs, user, view.now)?;
    snapshots.record_snapshot(key, view.data.clone(), view.now);
    Ok(delta)
}

/// Applies `d` literally to `base`: deletes, then creates, then updates.
/// Unlike a replica this tolerates nothing and sweeps nothing; it is the
/// reconstruction step of the oracle's self-test.
pub fn reconstruct(base: &SystemData, d: &DeltaSet) -> SystemData {
    let mut out = base.clone();
    for l in &d.del_links {
        out.links.remove(l);
    }
    for id in &d.del_objects {
        out.remove_object(id);
    }
    let state = |id: &ObjectId| d.states.get(id).cloned().unwrap_or_else(StateValue::new);
    for (id, class) in &d.crt_objects {
        out.put_object(id.clone(), class.clone(), state(id));
    }
    for id in &d.upd_objects {
        if out.contains(id) {
            out.states.insert(id.clone(), state(id));
        }
    }
    out.links.extend(d.crt_links.iter().cloned());
    out
}
