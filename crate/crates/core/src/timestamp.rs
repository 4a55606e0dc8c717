//! Timestamp-based change finder: works from the change log and the current
//! path set alone, with no per-user history on the server.

use crate::changelog::{ActionType, ChangeLog, Element, Timestamp};
use crate::delta::DeltaSet;
use crate::exec::Execution;
use crate::model::ObjectId;
use crate::path::{evaluate_all, Binding, EvalError, EvalOptions, Path, PathExpr, TypedGraph};
use crate::store::ServerView;

/// Where a client stands: its identity and the `ts_cs` of its last sync.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyncCursor {
    pub user: ObjectId,
    pub ts_ls: Timestamp,
}

impl SyncCursor {
    pub fn new(user: ObjectId) -> Self {
        Self {
            user,
            ts_ls: Timestamp::ZERO,
        }
    }
}

/// Which elements of a path an index query considers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementKind {
    Vertex,
    Edge,
    Any,
}

fn changed_after(log: &ChangeLog, element: &Element, ts: Timestamp) -> bool {
    ActionType::ALL
        .iter()
        .any(|&a| log.ts(element, a).is_some_and(|t| t > ts))
}

/// True when some element of `p` was created, updated or deleted after `ts_ls`.
pub fn has_modification(p: &Path, ts_ls: Timestamp, log: &ChangeLog) -> bool {
    p.vertices()
        .iter()
        .any(|v| changed_after(log, &Element::Object(v.clone()), ts_ls))
        || p.edges()
            .iter()
            .any(|e| changed_after(log, &Element::Link(e.clone()), ts_ls))
}

/// Smallest flattened index of an element of `kind` on `p` created after
/// `ts`. `None` stands for infinity: no such element.
pub fn index_of_first_created_element(
    p: &Path,
    ts: Timestamp,
    kind: ElementKind,
    log: &ChangeLog,
) -> Option<usize> {
    let created = |el: Element| log.ts(&el, ActionType::Create).is_some_and(|t| t > ts);
    let vertex = p
        .indexed_vertices()
        .find(|(_, v)| created(Element::Object((*v).clone())))
        .map(|(i, _)| i);
    let edge = p
        .indexed_edges()
        .find(|(_, e)| created(Element::Link((*e).clone())))
        .map(|(i, _)| i);
    match kind {
        ElementKind::Vertex => vertex,
        ElementKind::Edge => edge,
        ElementKind::Any => vertex.into_iter().chain(edge).min(),
    }
}

pub fn timestamp_sync(
    cursor: &SyncCursor,
    view: ServerView<'_>,
    exprs: &[PathExpr],
) -> Result<DeltaSet, EvalError> {
    timestamp_sync_with(cursor, view, exprs, Execution::default())
}

/// Computes the delta for `cursor` from one consistent server view.
///
/// Every element of a modified path that was created or updated after
/// `ts_ls` is delivered, and so is everything from the path's first new edge
/// onward: those elements may never have reached the client even if they
/// are old. All deletions after `ts_ls` are delivered regardless of
/// relevance. `ts_cs` is the largest timestamp recorded for any delivered
/// element, or `ts_ls` when nothing is delivered.
pub fn timestamp_sync_with(
    cursor: &SyncCursor,
    view: ServerView<'_>,
    exprs: &[PathExpr],
    execution: Execution,
) -> Result<DeltaSet, EvalError> {
    let ts_ls = cursor.ts_ls;
    let log = view.log;
    let g = TypedGraph::new(view.schema, view.data);
    let opts = EvalOptions {
        execution,
        ..EvalOptions::default()
    };
    let paths = evaluate_all(exprs, &g, &Binding::user(cursor.user.clone()), &opts)?;

    let mut d = DeltaSet::empty(ts_ls);
    let after = |el: Element, action| log.ts(&el, action).is_some_and(|t| t > ts_ls);
    for p in paths.iter().filter(|p| has_modification(p, ts_ls, log)) {
        let i_l =
            index_of_first_created_element(p, ts_ls, ElementKind::Edge, log).unwrap_or(usize::MAX);
        for (i, v) in p.indexed_vertices() {
            if i >= i_l || after(Element::Object(v.clone()), ActionType::Create) {
                d.crt_objects
                    .insert(v.clone(), view.data.objects[v].clone());
            } else if after(Element::Object(v.clone()), ActionType::Update) {
                d.upd_objects.insert(v.clone());
            }
        }
        for (i, e) in p.indexed_edges() {
            if i >= i_l || after(Element::Link(e.clone()), ActionType::Create) {
                d.crt_links.insert(e.clone());
            }
        }
    }
    d.upd_objects.retain(|id| !d.crt_objects.contains_key(id));
    (d.del_objects, d.del_links) = log.deletions_since(ts_ls);

    for id in d.crt_objects.keys().chain(&d.upd_objects) {
        d.states
            .insert(id.clone(), view.data.state(id).cloned().unwrap_or_default());
    }
    for id in &d.upd_objects {
        d.upd_classes
            .insert(id.clone(), view.data.objects[id].clone());
    }

    let delivered = d
        .crt_objects
        .keys()
        .chain(&d.upd_objects)
        .chain(&d.del_objects)
        .map(|id| Element::Object(id.clone()))
        .chain(
            d.crt_links
                .iter()
                .chain(&d.del_links)
                .map(|l| Element::Link(l.clone())),
        );
    d.ts_cs = delivered
        .flat_map(|el| ActionType::ALL.map(|a| log.ts(&el, a)))
        .flatten()
        .fold(ts_ls, Timestamp::max);
    Ok(d)
}
