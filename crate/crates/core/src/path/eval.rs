//! Path-set derivation and the relevance selection built on it.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::expr::{Direct, PathExpr, Ref};
use super::graph::{Path, TypedGraph};
use crate::exec::{self, Execution};
use crate::model::{ClassName, Link, ObjectId, Schema, SystemData};

/// Hard ceiling on the number of paths a single expression may generate.
pub const DEFAULT_PATH_CAP: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unbound variable '{0}'")]
    UnboundVariable(String),
    #[error("unknown class '{0}'")]
    UnknownClass(ClassName),
    #[error("path limit of {cap} exceeded")]
    PathLimit { cap: usize },
}

/// Variable bindings for instance-set roots.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Binding(BTreeMap<String, ObjectId>);

impl Binding {
    pub fn new() -> Self {
        Self::default()
    }

    /// Binds `user` to the syncing identity.
    pub fn user(id: ObjectId) -> Self {
        let mut b = Self::new();
        b.bind(super::expr::USER_VAR, id);
        b
    }

    pub fn bind(&mut self, var: &str, id: ObjectId) {
        self.0.insert(var.to_owned(), id);
    }

    pub fn get(&self, var: &str) -> Option<&ObjectId> {
        self.0.get(var)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    pub path_cap: usize,
    pub execution: Execution,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            path_cap: DEFAULT_PATH_CAP,
            execution: Execution::default(),
        }
    }
}

pub type PathSet = BTreeSet<Path>;

/// Evaluates `expr` over `g` with the default options.
pub fn evaluate(
    expr: &PathExpr,
    g: &TypedGraph<'_>,
    binding: &Binding,
) -> Result<PathSet, EvalError> {
    evaluate_with(expr, g, binding, &EvalOptions::default())
}

fn root_vertices(
    expr: &PathExpr,
    g: &TypedGraph<'_>,
    binding: &Binding,
) -> Result<BTreeSet<ObjectId>, EvalError> {
    let data = g.data();
    let check_class = |c: &ClassName| {
        if g.schema().has_class(c) {
            Ok(())
        } else {
            Err(EvalError::UnknownClass(c.clone()))
        }
    };
    let roots = match &expr.root {
        Direct::Instances(refs) => {
            let mut out = BTreeSet::new();
            for r in refs {
                let id = match r {
                    Ref::Var(v) => binding
                        .get(v)
                        .ok_or_else(|| EvalError::UnboundVariable(v.clone()))?,
                    Ref::Id(id) => id,
                };
                if g.has_vertex(id) {
                    out.insert(id.clone());
                }
            }
            out
        }
        Direct::Class(class) => {
            check_class(class)?;
            data.objects
                .iter()
                .filter(|(_, c)| *c == class)
                .map(|(id, _)| id.clone())
                .collect()
        }
        Direct::Filter {
            class,
            attr,
            cmp,
            literal,
        } => {
            check_class(class)?;
            data.objects
                .iter()
                .filter(|(id, c)| {
                    *c == class
                        && data
                            .state(id)
                            .and_then(|s| s.get(attr))
                            .is_some_and(|v| cmp.holds(v, literal))
                })
                .map(|(id, _)| id.clone())
                .collect()
        }
    };
    Ok(roots)
}

/// Derives the path set of `expr`.
///
/// Starting from the zero-length root paths, each segment extends every path
/// that matched all previous segments by one edge whose far vertex plays the
/// segment's role, keeping the result simple. A path with no such extension
/// is retained as is and takes no further part in the derivation, so the
/// result is prefix-free.
pub fn evaluate_with(
    expr: &PathExpr,
    g: &TypedGraph<'_>,
    binding: &Binding,
    opts: &EvalOptions,
) -> Result<PathSet, EvalError> {
    let mut frontier: Vec<Path> = root_vertices(expr, g, binding)?
        .into_iter()
        .map(Path::start)
        .collect();
    let mut retained: Vec<Path> = Vec::new();
    let over_cap = |n: usize| {
        if n > opts.path_cap {
            Err(EvalError::PathLimit { cap: opts.path_cap })
        } else {
            Ok(())
        }
    };
    over_cap(frontier.len())?;

    for role in &expr.segments {
        let extensions = exec::map(opts.execution, &frontier, |p| {
            let end = p.end_vertex();
            g.incident(end)
                .iter()
                .filter_map(|&link| {
                    let far = link.other_end(end)?;
                    (!p.contains_vertex(far)
                        && !p.contains_edge(link)
                        && g.is_in_role(far, link, role))
                    .then(|| p.extended(link.clone(), far.clone()))
                })
                .collect::<Vec<_>>()
        });
        let mut next = Vec::new();
        for (p, ext) in frontier.into_iter().zip(extensions) {
            if ext.is_empty() {
                retained.push(p);
            } else {
                next.extend(ext);
            }
            over_cap(next.len() + retained.len())?;
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }

    retained.extend(frontier);
    Ok(retained.into_iter().collect())
}

/// Union of the path sets of all `exprs`. Expressions are evaluated with
/// `opts.execution`.
pub fn evaluate_all(
    exprs: &[PathExpr],
    g: &TypedGraph<'_>,
    binding: &Binding,
    opts: &EvalOptions,
) -> Result<PathSet, EvalError> {
    let sets = exec::map(opts.execution, exprs, |e| {
        evaluate_with(e, g, binding, opts)
    });
    let mut all = PathSet::new();
    for s in sets {
        all.extend(s?);
    }
    Ok(all)
}

/// Relevant sub-data plus, per object, how many distinct paths contain it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RelevantData {
    pub data: SystemData,
    pub path_counts: BTreeMap<ObjectId, usize>,
}

/// Projects a path set onto the data: objects and links on any path, states
/// of those objects.
pub fn project(data: &SystemData, paths: &PathSet) -> RelevantData {
    let mut path_counts: BTreeMap<ObjectId, usize> = BTreeMap::new();
    let mut links: BTreeSet<Link> = BTreeSet::new();
    for p in paths {
        for v in p.vertices() {
            *path_counts.entry(v.clone()).or_default() += 1;
        }
        links.extend(p.edges().iter().cloned());
    }
    let keep: BTreeSet<ObjectId> = path_counts.keys().cloned().collect();
    RelevantData {
        data: data.restrict(&keep, links),
        path_counts,
    }
}

/// The relevant data of `data` for the bound user.
pub fn select_relevant(
    schema: &Schema,
    data: &SystemData,
    exprs: &[PathExpr],
    binding: &Binding,
) -> Result<RelevantData, EvalError> {
    select_relevant_with(schema, data, exprs, binding, &EvalOptions::default())
}

pub fn select_relevant_with(
    schema: &Schema,
    data: &SystemData,
    exprs: &[PathExpr],
    binding: &Binding,
    opts: &EvalOptions,
) -> Result<RelevantData, EvalError> {
    let g = TypedGraph::new(schema, data);
    let paths = evaluate_all(exprs, &g, binding, opts)?;
    Ok(project(data, &paths))
}
