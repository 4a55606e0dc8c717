//! The graph with typed edges built over system data, paths in it, and the
//! path predicates used by evaluation and by the timestamp sync.

use std::collections::BTreeMap;
use std::fmt;

use crate::changelog::Element;
use crate::model::{Link, ObjectId, RoleName, Schema, SystemData};

/// Vertices are the objects, edges are the links, edge types are the schema's
/// associations. Borrowed from the data it was built for.
#[derive(Debug, Clone)]
pub struct TypedGraph<'a> {
    schema: &'a Schema,
    data: &'a SystemData,
    adjacency: BTreeMap<&'a ObjectId, Vec<&'a Link>>,
}

impl<'a> TypedGraph<'a> {
    pub fn new(schema: &'a Schema, data: &'a SystemData) -> Self {
        let mut adjacency: BTreeMap<&ObjectId, Vec<&Link>> = BTreeMap::new();
        for link in &data.links {
            adjacency.entry(&link.src).or_default().push(link);
            if link.dst != link.src {
                adjacency.entry(&link.dst).or_default().push(link);
            }
        }
        Self {
            schema,
            data,
            adjacency,
        }
    }

    pub fn schema(&self) -> &'a Schema {
        self.schema
    }

    pub fn data(&self) -> &'a SystemData {
        self.data
    }

    pub fn has_vertex(&self, v: &ObjectId) -> bool {
        self.data.contains(v)
    }

    pub fn has_edge(&self, e: &Link) -> bool {
        self.data.links.contains(e)
    }

    pub fn incident(&self, v: &ObjectId) -> &[&'a Link] {
        self.adjacency.get(v).map_or(&[], Vec::as_slice)
    }

    /// True when `v` is an endpoint of `e` and occupies the end of `e`'s
    /// association named `role`. Both orientations are checked.
    pub fn is_in_role(&self, v: &ObjectId, e: &Link, role: &RoleName) -> bool {
        if !self.has_edge(e) {
            return false;
        }
        let Some(assoc) = self.schema.association(&e.assoc) else {
            return false;
        };
        (&e.src == v && &assoc.role_a == role) || (&e.dst == v && &assoc.role_b == role)
    }

    /// True when the sequence is a simple path of this graph: every edge
    /// exists and joins its neighbours, vertices and edges are pairwise distinct.
    pub fn is_path(&self, p: &Path) -> bool {
        if p.vertices.len() != p.edges.len() + 1 || !p.vertices.iter().all(|v| self.has_vertex(v)) {
            return false;
        }
        let joins = p.edges.iter().enumerate().all(|(i, e)| {
            let (a, b) = (&p.vertices[i], &p.vertices[i + 1]);
            self.has_edge(e) && ((&e.src == a && &e.dst == b) || (&e.src == b && &e.dst == a))
        });
        joins && all_distinct(&p.vertices) && all_distinct(&p.edges)
    }

    /// True when `q` extends `p` by zero or more edge/vertex pairs and both are
    /// paths. With `proper`, `q` must be strictly longer.
    pub fn is_sub_path(&self, p: &Path, q: &Path, proper: bool) -> bool {
        self.is_path(p) && self.is_path(q) && p.is_prefix_of(q) && (!proper || q.len() > p.len())
    }
}

fn all_distinct<T: Ord>(items: &[T]) -> bool {
    let mut sorted: Vec<&T> = items.iter().collect();
    sorted.sort();
    sorted.windows(2).all(|w| w[0] != w[1])
}

/// Alternating sequence `v0 e0 v1 ... e(n-1) vn`. In the flattened sequence a
/// vertex `vi` sits at index `2i` and an edge `ei` at `2i + 1`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Path {
    vertices: Vec<ObjectId>,
    edges: Vec<Link>,
}

impl Path {
    pub fn start(v: ObjectId) -> Self {
        Self {
            vertices: vec![v],
            edges: Vec::new(),
        }
    }

    /// Builds a path from its parts; `vertices.len()` must be `edges.len() + 1`.
    pub fn from_parts(vertices: Vec<ObjectId>, edges: Vec<Link>) -> Self {
        assert_eq!(vertices.len(), edges.len() + 1, "malformed path");
        Self { vertices, edges }
    }

    pub fn extended(&self, e: Link, v: ObjectId) -> Self {
        let mut next = self.clone();
        next.edges.push(e);
        next.vertices.push(v);
        next
    }

    /// Number of edges.
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn vertices(&self) -> &[ObjectId] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Link] {
        &self.edges
    }

    pub fn end_vertex(&self) -> &ObjectId {
        self.vertices.last().expect("path has at least one vertex")
    }

    pub fn contains_vertex(&self, v: &ObjectId) -> bool {
        self.vertices.contains(v)
    }

    pub fn contains_edge(&self, e: &Link) -> bool {
        self.edges.contains(e)
    }

    pub fn is_in_path(&self, element: &Element) -> bool {
        self.index_of(element).is_some()
    }

    /// Flattened index of `element`, if it lies on the path.
    pub fn index_of(&self, element: &Element) -> Option<usize> {
        match element {
            Element::Object(v) => self.vertices.iter().position(|x| x == v).map(|i| 2 * i),
            Element::Link(e) => self.edges.iter().position(|x| x == e).map(|i| 2 * i + 1),
        }
    }

    /// `(index, vertex)` pairs in flattened numbering.
    pub fn indexed_vertices(&self) -> impl Iterator<Item = (usize, &ObjectId)> {
        self.vertices.iter().enumerate().map(|(i, v)| (2 * i, v))
    }

    /// `(index, edge)` pairs in flattened numbering.
    pub fn indexed_edges(&self) -> impl Iterator<Item = (usize, &Link)> {
        self.edges.iter().enumerate().map(|(i, e)| (2 * i + 1, e))
    }

    /// Prefix test on the sequences alone (zero extension counts).
    pub fn is_prefix_of(&self, other: &Path) -> bool {
        other.vertices.starts_with(&self.vertices) && other.edges.starts_with(&self.edges)
    }
}

/// `v0 -assoc- v1 -assoc- v2`
impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.vertices[0])?;
        for (e, v) in self.edges.iter().zip(&self.vertices[1..]) {
            write!(f, " -{}- {v}", e.assoc)?;
        }
        Ok(())
    }
}
