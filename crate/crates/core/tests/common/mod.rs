//! Test-only reference implementations and generators. Nothing here calls the
//! path evaluator; relevance is recomputed by exhaustive enumeration.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::Rng;
use relsync_core::model::{AssociationDef, Link, ObjectId, Scalar, Schema, StateValue, SystemData};
use relsync_core::path::{Comparator, Direct, PathExpr, Ref};

/// A path as plain vectors, independent of the library's path type.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct RawPath {
    pub vertices: Vec<ObjectId>,
    pub edges: Vec<Link>,
}

fn holds(cmp: Comparator, v: &Scalar, lit: &Scalar) -> bool {
    match (cmp, v, lit) {
        (Comparator::Eq, a, b) => a == b,
        (Comparator::Ne, a, b) => a != b,
        (Comparator::Lt, Scalar::Int(a), Scalar::Int(b)) => a < b,
        (Comparator::Gt, Scalar::Int(a), Scalar::Int(b)) => a > b,
        (Comparator::Lt, Scalar::Str(a), Scalar::Str(b)) => a < b,
        (Comparator::Gt, Scalar::Str(a), Scalar::Str(b)) => a > b,
        _ => false,
    }
}

fn roots(expr: &PathExpr, data: &SystemData, user: &ObjectId) -> BTreeSet<ObjectId> {
    match &expr.root {
        Direct::Instances(refs) => refs
            .iter()
            .map(|r| match r {
                Ref::Var(_) => user.clone(),
                Ref::Id(id) => id.clone(),
            })
            .filter(|id| data.objects.contains_key(id))
            .collect(),
        Direct::Class(c) => data
            .objects
            .iter()
            .filter(|(_, k)| *k == c)
            .map(|(id, _)| id.clone())
            .collect(),
        Direct::Filter {
            class,
            attr,
            cmp,
            literal,
        } => data
            .objects
            .iter()
            .filter(|(id, k)| {
                *k == class
                    && data
                        .states
                        .get(*id)
                        .and_then(|s| s.get(attr))
                        .is_some_and(|v| holds(*cmp, v, literal))
            })
            .map(|(id, _)| id.clone())
            .collect(),
    }
}

/// Every simple path from `start` with at most `max_len` edges, ignoring roles.
fn all_simple_paths(data: &SystemData, start: &ObjectId, max_len: usize) -> Vec<RawPath> {
    let mut out = Vec::new();
    let mut stack = vec![RawPath {
        vertices: vec![start.clone()],
        edges: Vec::new(),
    }];
    while let Some(p) = stack.pop() {
        if p.edges.len() < max_len {
            let end = p.vertices.last().unwrap();
            for l in &data.links {
                let far = if &l.src == end {
                    &l.dst
                } else if &l.dst == end {
                    &l.src
                } else {
                    continue;
                };
                if p.vertices.contains(far) {
                    continue;
                }
                let mut q = p.clone();
                q.edges.push(l.clone());
                q.vertices.push(far.clone());
                stack.push(q);
            }
        }
        out.push(p);
    }
    out
}

/// Whether edge `i` of `p` enters its far vertex through the given role.
fn edge_matches(schema: &Schema, p: &RawPath, i: usize, role: &str) -> bool {
    let l = &p.edges[i];
    let far = &p.vertices[i + 1];
    let def = schema
        .associations()
        .find(|a| a.name == l.assoc)
        .expect("link of a schema association");
    (&l.src == far && def.role_a.as_str() == role) || (&l.dst == far && def.role_b.as_str() == role)
}

/// The path set: among paths whose every edge matches its segment, those that
/// use all segments or admit no matching one-edge extension.
pub fn brute_paths(
    schema: &Schema,
    data: &SystemData,
    expr: &PathExpr,
    user: &ObjectId,
) -> BTreeSet<RawPath> {
    let n = expr.segments.len();
    let mut matched = BTreeSet::new();
    for r in roots(expr, data, user) {
        for p in all_simple_paths(data, &r, n) {
            if (0..p.edges.len()).all(|i| edge_matches(schema, &p, i, expr.segments[i].as_str())) {
                matched.insert(p);
            }
        }
    }
    let extended: BTreeSet<RawPath> = matched
        .iter()
        .filter(|p| !p.edges.is_empty())
        .map(|p| RawPath {
            vertices: p.vertices[..p.vertices.len() - 1].to_vec(),
            edges: p.edges[..p.edges.len() - 1].to_vec(),
        })
        .collect();
    matched
        .into_iter()
        .filter(|p| p.edges.len() == n || !extended.contains(p))
        .collect()
}

/// Relevant data from the enumerated path sets of all `exprs`.
pub fn brute_relevant(
    schema: &Schema,
    data: &SystemData,
    exprs: &[PathExpr],
    user: &ObjectId,
) -> SystemData {
    let mut out = SystemData::new();
    for e in exprs {
        for p in brute_paths(schema, data, e, user) {
            for v in &p.vertices {
                out.objects.insert(v.clone(), data.objects[v].clone());
                out.states
                    .insert(v.clone(), data.states.get(v).cloned().unwrap_or_default());
            }
            out.links.extend(p.edges.iter().cloned());
        }
    }
    out
}

/// Sub-data check written out directly.
pub fn contained_in(sub: &SystemData, sup: &SystemData) -> bool {
    sub.objects
        .iter()
        .all(|(id, c)| sup.objects.get(id) == Some(c))
        && sub.links.iter().all(|l| {
            sup.links.contains(l)
                && sub.objects.contains_key(&l.src)
                && sub.objects.contains_key(&l.dst)
        })
        && sub
            .states
            .iter()
            .all(|(id, s)| sup.states.get(id) == Some(s) && sub.objects.contains_key(id))
}

pub fn social_fixture() -> SystemData {
    let mut d = SystemData::new();
    for (id, class) in [
        ("I1", "Identity"),
        ("I2", "Identity"),
        ("I3", "Identity"),
        ("C1", "Contact"),
        ("E1", "Event"),
        ("P1", "Participation"),
        ("P2", "Participation"),
        ("P3", "Participation"),
    ] {
        d.put_object(id.into(), class.into(), StateValue::new());
    }
    for (s, a, t) in [
        ("I1", "Ownership", "C1"),
        ("C1", "Reference", "I2"),
        ("I1", "Attendance", "P1"),
        ("I2", "Attendance", "P2"),
        ("I3", "Attendance", "P3"),
        ("E1", "Invitation", "P1"),
        ("E1", "Invitation", "P2"),
        ("E1", "Invitation", "P3"),
    ] {
        d.links.insert(Link::new(s, a, t));
    }
    d
}

pub fn fixture_exprs() -> Vec<PathExpr> {
    [
        "{user}.Contact.contactIdentity",
        "{user}.Participation.Event.Participation.Identity",
    ]
    .iter()
    .map(|s| PathExpr::parse(s).unwrap())
    .collect()
}

const CLASS_NAMES: [&str; 4] = ["K0", "K1", "K2", "K3"];
const ROLE_NAMES: [&str; 5] = ["ra", "rb", "rc", "rd", "re"];

/// A schema of 1-4 classes and 1-5 associations; self-associations get
/// distinct roles.
pub fn random_schema(rng: &mut impl Rng) -> Schema {
    let mut s = Schema::new();
    let n_classes = rng.random_range(1..=4);
    for c in &CLASS_NAMES[..n_classes] {
        s.add_class(*c).unwrap();
    }
    for i in 0..rng.random_range(1..=5) {
        let a = CLASS_NAMES[rng.random_range(0..n_classes)];
        let b = CLASS_NAMES[rng.random_range(0..n_classes)];
        let ra = *ROLE_NAMES.choose(rng).unwrap();
        let mut rb = *ROLE_NAMES.choose(rng).unwrap();
        while a == b && ra == rb {
            rb = *ROLE_NAMES.choose(rng).unwrap();
        }
        s.add_association(AssociationDef::new(&format!("A{i}"), (a, ra), (b, rb)))
            .unwrap();
    }
    s
}

pub fn random_state(rng: &mut impl Rng) -> StateValue {
    match rng.random_range(0..3) {
        0 => StateValue::new(),
        1 => StateValue::new().with("n", rng.random_range(0..5i64)),
        _ => StateValue::new().with("s", *["x", "y", "z"].choose(rng).unwrap()),
    }
}

/// Schema-valid data with at most `max_objects` objects; ids are `o<i>`.
pub fn random_data(rng: &mut impl Rng, schema: &Schema, max_objects: usize) -> SystemData {
    let classes: Vec<_> = schema.classes().cloned().collect();
    let mut d = SystemData::new();
    let n = rng.random_range(1..=max_objects);
    for i in 0..n {
        let state = random_state(rng);
        d.put_object(
            format!("o{i}").into(),
            classes.choose(rng).unwrap().clone(),
            state,
        );
    }
    let assocs: Vec<_> = schema.associations().cloned().collect();
    let by_class = |c: &relsync_core::model::ClassName| -> Vec<ObjectId> {
        d.objects
            .iter()
            .filter(|(_, k)| *k == c)
            .map(|(id, _)| id.clone())
            .collect()
    };
    let mut links = BTreeSet::new();
    for _ in 0..rng.random_range(0..=2 * n) {
        let a = assocs.choose(rng).unwrap();
        let (srcs, dsts) = (by_class(&a.class_a), by_class(&a.class_b));
        if let (Some(s), Some(t)) = (srcs.choose(rng), dsts.choose(rng)) {
            links.insert(Link::new(s.clone(), a.name.clone(), t.clone()));
        }
    }
    d.links = links;
    d
}

/// Random expression over `schema`; sometimes names roles or ids that do not
/// occur.
pub fn random_expr(rng: &mut impl Rng, schema: &Schema, data: &SystemData) -> PathExpr {
    let classes: Vec<_> = schema.classes().cloned().collect();
    let mut roles: Vec<String> = schema
        .associations()
        .flat_map(|a| [a.role_a.to_string(), a.role_b.to_string()])
        .collect();
    roles.push("nowhere".into());
    let ids: Vec<ObjectId> = data.objects.keys().cloned().collect();
    let root = match rng.random_range(0..4) {
        0 => Direct::Instances(vec![Ref::Var("user".into())]),
        1 => {
            let mut refs = vec![Ref::Var("user".into())];
            for _ in 0..rng.random_range(1..=2) {
                let id = ids.choose(rng).cloned().unwrap_or_else(|| "ghost".into());
                refs.push(Ref::Id(if rng.random_bool(0.1) {
                    "ghost".into()
                } else {
                    id
                }));
            }
            Direct::Instances(refs)
        }
        2 => Direct::Class(classes.choose(rng).unwrap().clone()),
        _ => {
            let cmp = *[
                Comparator::Eq,
                Comparator::Ne,
                Comparator::Lt,
                Comparator::Gt,
            ]
            .choose(rng)
            .unwrap();
            let (attr, literal) = if rng.random_bool(0.5) {
                ("n".to_string(), Scalar::Int(rng.random_range(0..5)))
            } else {
                (
                    "s".to_string(),
                    Scalar::from(*["x", "y", "z"].choose(rng).unwrap()),
                )
            };
            Direct::Filter {
                class: classes.choose(rng).unwrap().clone(),
                attr,
                cmp,
                literal,
            }
        }
    };
    let segments = (0..rng.random_range(0..=4))
        .map(|_| roles.choose(rng).unwrap().as_str().into())
        .collect();
    PathExpr { root, segments }
}

/// Converts library paths for comparison with [`brute_paths`].
pub fn raw(paths: &BTreeSet<relsync_core::path::Path>) -> BTreeSet<RawPath> {
    paths
        .iter()
        .map(|p| RawPath {
            vertices: p.vertices().to_vec(),
            edges: p.edges().to_vec(),
        })
        .collect()
}

/// No path in the set is a proper prefix of another.
pub fn prefix_free(paths: &BTreeSet<RawPath>) -> bool {
    paths.iter().all(|p| {
        paths.iter().all(|q| {
            p == q
                || !(q.edges.len() > p.edges.len()
                    && q.vertices.starts_with(&p.vertices)
                    && q.edges.starts_with(&p.edges))
        })
    })
}

/// `data` with every object's state interpreted as a map, for readable diffs.
pub fn summary(data: &SystemData) -> BTreeMap<String, String> {
    data.objects
        .iter()
        .map(|(id, c)| {
            (
                id.to_string(),
                format!("{c} {}", data.states.get(id).cloned().unwrap_or_default()),
            )
        })
        .collect()
}

/// An expression read off a random walk through `data`, so that its segments
/// usually match something; the walk may stop early or take a wrong turn.
pub fn guided_expr(rng: &mut impl Rng, schema: &Schema, data: &SystemData) -> PathExpr {
    let ids: Vec<&ObjectId> = data.objects.keys().collect();
    let start = (*ids.choose(rng).unwrap()).clone();
    let root = if rng.random_bool(0.5) {
        Direct::Instances(vec![Ref::Id(start.clone())])
    } else {
        Direct::Class(data.objects[&start].clone())
    };
    let mut segments = Vec::new();
    let mut at = start;
    for _ in 0..rng.random_range(1..=4) {
        let incident: Vec<&Link> = data.links.iter().filter(|l| l.touches(&at)).collect();
        let Some(l) = incident.choose(rng) else { break };
        let far = l.other_end(&at).unwrap().clone();
        let def = schema.association(&l.assoc).unwrap();
        let role = if l.src == far {
            &def.role_a
        } else {
            &def.role_b
        };
        segments.push(role.clone());
        at = far;
    }
    if rng.random_bool(0.2) {
        segments.push(ROLE_NAMES.choose(rng).unwrap().to_string().as_str().into());
    }
    PathExpr { root, segments }
}
