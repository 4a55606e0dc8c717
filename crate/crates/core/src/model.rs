//! The typed object-graph data model: objects with classes, links typed by
//! associations, per-object states, and the schema that constrains them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::token::{self, render_state};

macro_rules! name_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(Arc<str>);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }

            /// True when the name is a well-formed token.
            pub fn is_valid(&self) -> bool {
                token::is_token(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(Arc::from(s))
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(Arc::from(s))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({:?})", stringify!($name), &*self.0)
            }
        }
    };
}

name_type!(
    /// Opaque object identity shared by the server and every replica.
    ObjectId
);
name_type!(ClassName);
name_type!(RoleName);
name_type!(AssocName);

/// Attribute value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scalar {
    Str(String),
    Int(i64),
    Bool(bool),
}

impl From<&str> for Scalar {
    fn from(s: &str) -> Self {
        Scalar::Str(s.to_owned())
    }
}

impl From<i64> for Scalar {
    fn from(i: i64) -> Self {
        Scalar::Int(i)
    }
}

impl From<bool> for Scalar {
    fn from(b: bool) -> Self {
        Scalar::Bool(b)
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&token::render_scalar(self))
    }
}

/// Object state: attribute name to scalar.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateValue(BTreeMap<String, Scalar>);

impl StateValue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, attr: &str, value: impl Into<Scalar>) -> Self {
        self.0.insert(attr.to_owned(), value.into());
        self
    }

    pub fn get(&self, attr: &str) -> Option<&Scalar> {
        self.0.get(attr)
    }

    pub fn insert(&mut self, attr: String, value: Scalar) -> Option<Scalar> {
        self.0.insert(attr, value)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Scalar)> {
        self.0.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<BTreeMap<String, Scalar>> for StateValue {
    fn from(attrs: BTreeMap<String, Scalar>) -> Self {
        Self(attrs)
    }
}

impl fmt::Display for StateValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_state(self))
    }
}

/// A link `(src, dst, assoc)`. Field order makes the derived ordering match the
/// canonical `src assoc dst` text form.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Link {
    pub src: ObjectId,
    pub assoc: AssocName,
    pub dst: ObjectId,
}

impl Link {
    pub fn new(
        src: impl Into<ObjectId>,
        assoc: impl Into<AssocName>,
        dst: impl Into<ObjectId>,
    ) -> Self {
        Self {
            src: src.into(),
            assoc: assoc.into(),
            dst: dst.into(),
        }
    }

    pub fn touches(&self, id: &ObjectId) -> bool {
        &self.src == id || &self.dst == id
    }

    /// The endpoint opposite to `id`, if `id` is an endpoint.
    pub fn other_end(&self, id: &ObjectId) -> Option<&ObjectId> {
        if &self.src == id {
            Some(&self.dst)
        } else if &self.dst == id {
            Some(&self.src)
        } else {
            None
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.src, self.assoc, self.dst)
    }
}

/// A link type: two classes, each end addressed by its role name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AssociationDef {
    pub name: AssocName,
    pub class_a: ClassName,
    pub role_a: RoleName,
    pub class_b: ClassName,
    pub role_b: RoleName,
}

impl AssociationDef {
    pub fn new(
        name: &str,
        (class_a, role_a): (&str, &str),
        (class_b, role_b): (&str, &str),
    ) -> Self {
        Self {
            name: name.into(),
            class_a: class_a.into(),
            role_a: role_a.into(),
            class_b: class_b.into(),
            role_b: role_b.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("invalid name '{0}'")]
    InvalidName(String),
    #[error("duplicate class '{0}'")]
    DuplicateClass(ClassName),
    #[error("duplicate association '{0}'")]
    DuplicateAssociation(AssocName),
    #[error("association '{assoc}' references unknown class '{class}'")]
    UnknownClass { assoc: AssocName, class: ClassName },
    #[error("self-referential association '{0}' needs two distinct roles")]
    AmbiguousRoles(AssocName),
}

/// Classes plus associations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Schema {
    classes: BTreeSet<ClassName>,
    assocs: BTreeMap<AssocName, AssociationDef>,
}

impl Schema {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_class(&mut self, name: impl Into<ClassName>) -> Result<(), SchemaError> {
        let name = name.into();
        if !name.is_valid() {
            return Err(SchemaError::InvalidName(name.to_string()));
        }
        if !self.classes.insert(name.clone()) {
            return Err(SchemaError::DuplicateClass(name));
        }
        Ok(())
    }

    pub fn add_association(&mut self, def: AssociationDef) -> Result<(), SchemaError> {
        for n in [def.name.as_str(), def.role_a.as_str(), def.role_b.as_str()] {
            if !token::is_token(n) {
                return Err(SchemaError::InvalidName(n.to_owned()));
            }
        }
        for class in [&def.class_a, &def.class_b] {
            if !self.classes.contains(class) {
                return Err(SchemaError::UnknownClass {
                    assoc: def.name.clone(),
                    class: class.clone(),
                });
            }
        }
        if def.class_a == def.class_b && def.role_a == def.role_b {
            return Err(SchemaError::AmbiguousRoles(def.name));
        }
        if self.assocs.contains_key(&def.name) {
            return Err(SchemaError::DuplicateAssociation(def.name));
        }
        self.assocs.insert(def.name.clone(), def);
        Ok(())
    }

    pub fn classes(&self) -> impl Iterator<Item = &ClassName> {
        self.classes.iter()
    }

    pub fn has_class(&self, class: &ClassName) -> bool {
        self.classes.contains(class)
    }

    pub fn association(&self, name: &AssocName) -> Option<&AssociationDef> {
        self.assocs.get(name)
    }

    pub fn associations(&self) -> impl Iterator<Item = &AssociationDef> {
        self.assocs.values()
    }

    /// True when some association end carries this role name.
    pub fn has_role(&self, role: &RoleName) -> bool {
        self.assocs
            .values()
            .any(|a| &a.role_a == role || &a.role_b == role)
    }
}

/// The `(objects, links, states)` triple.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SystemData {
    pub objects: BTreeMap<ObjectId, ClassName>,
    pub links: BTreeSet<Link>,
    pub states: BTreeMap<ObjectId, StateValue>,
}

impl SystemData {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty() && self.links.is_empty()
    }

    pub fn contains(&self, id: &ObjectId) -> bool {
        self.objects.contains_key(id)
    }

    pub fn class_of(&self, id: &ObjectId) -> Option<&ClassName> {
        self.objects.get(id)
    }

    pub fn state(&self, id: &ObjectId) -> Option<&StateValue> {
        self.states.get(id)
    }

    /// Inserts or replaces an object together with its state.
    pub fn put_object(&mut self, id: ObjectId, class: ClassName, state: StateValue) {
        self.objects.insert(id.clone(), class);
        self.states.insert(id, state);
    }

    /// Removes an object, its state and every incident link. Returns the links removed.
    pub fn remove_object(&mut self, id: &ObjectId) -> Vec<Link> {
        self.objects.remove(id);
        self.states.remove(id);
        let incident: Vec<Link> = self
            .links
            .iter()
            .filter(|l| l.touches(id))
            .cloned()
            .collect();
        for l in &incident {
            self.links.remove(l);
        }
        incident
    }

    /// Restriction to `keep`: objects, their states, and the links given that
    /// join two kept objects.
    pub fn restrict(
        &self,
        keep: &BTreeSet<ObjectId>,
        links: impl IntoIterator<Item = Link>,
    ) -> SystemData {
        let objects = self
            .objects
            .iter()
            .filter(|(id, _)| keep.contains(*id))
            .map(|(id, c)| (id.clone(), c.clone()))
            .collect();
        let states = self
            .states
            .iter()
            .filter(|(id, _)| keep.contains(*id))
            .map(|(id, s)| (id.clone(), s.clone()))
            .collect();
        let links = links
            .into_iter()
            .filter(|l| keep.contains(&l.src) && keep.contains(&l.dst) && self.links.contains(l))
            .collect();
        SystemData {
            objects,
            links,
            states,
        }
    }

    /// Canonical dump: sorted `obj` lines, then sorted `link` lines.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (id, class) in &self.objects {
            let state = self.states.get(id).cloned().unwrap_or_default();
            out.push_str(&format!("obj {id} {class} {state}\n"));
        }
        for l in &self.links {
            out.push_str(&format!("link {l}\n"));
        }
        out
    }
}

/// One broken clause found by [`validate_schema`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("unknown class: object {object} has class {class}")]
    UnknownClass { object: ObjectId, class: ClassName },
    #[error("unknown association: link {link}")]
    UnknownAssociation { link: Link },
    #[error("link class mismatch: link {link} joins {found_src}-{found_dst}, association expects {expected_src}-{expected_dst}")]
    LinkClassMismatch {
        link: Link,
        expected_src: ClassName,
        expected_dst: ClassName,
        found_src: ClassName,
        found_dst: ClassName,
    },
    #[error("dangling link: link {link} has missing endpoint {missing}")]
    DanglingLink { link: Link, missing: ObjectId },
    #[error("missing state: object {object}")]
    MissingState { object: ObjectId },
    #[error("orphan state: state for unknown object {object}")]
    OrphanState { object: ObjectId },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that `schema` is a schema of `data`: every object belongs to a known
/// class and every link joins objects of its association's class pair.
pub fn validate_schema(schema: &Schema, data: &SystemData) -> ValidationReport {
    let mut violations = Vec::new();
    for (id, class) in &data.objects {
        if !schema.has_class(class) {
            violations.push(Violation::UnknownClass {
                object: id.clone(),
                class: class.clone(),
            });
        }
        if !data.states.contains_key(id) {
            violations.push(Violation::MissingState { object: id.clone() });
        }
    }
    for id in data.states.keys() {
        if !data.objects.contains_key(id) {
            violations.push(Violation::OrphanState { object: id.clone() });
        }
    }
    for link in &data.links {
        let Some(assoc) = schema.association(&link.assoc) else {
            violations.push(Violation::UnknownAssociation { link: link.clone() });
            continue;
        };
        let (Some(src), Some(dst)) = (data.class_of(&link.src), data.class_of(&link.dst)) else {
            let missing = if data.contains(&link.src) {
                link.dst.clone()
            } else {
                link.src.clone()
            };
            violations.push(Violation::DanglingLink {
                link: link.clone(),
                missing,
            });
            continue;
        };
        if src != &assoc.class_a || dst != &assoc.class_b {
            violations.push(Violation::LinkClassMismatch {
                link: link.clone(),
                expected_src: assoc.class_a.clone(),
                expected_dst: assoc.class_b.clone(),
                found_src: src.clone(),
                found_dst: dst.clone(),
            });
        }
    }
    ValidationReport { violations }
}

/// `sub` is sub-data of `sup`: its objects are a subset (with the same
/// classes), its links a subset of `sup`'s links between its own objects, and
/// its states agree with `sup` on its objects.
pub fn is_subdata(sub: &SystemData, sup: &SystemData) -> bool {
    let objects_ok = sub
        .objects
        .iter()
        .all(|(id, class)| sup.objects.get(id) == Some(class));
    let links_ok = sub
        .links
        .iter()
        .all(|l| sup.links.contains(l) && sub.contains(&l.src) && sub.contains(&l.dst));
    let states_ok = sub
        .objects
        .keys()
        .all(|id| sub.states.get(id) == sup.states.get(id))
        && sub.states.keys().all(|id| sub.objects.contains_key(id));
    objects_ok && links_ok && states_ok
}

/// The social-event model: identities, their contacts, participations and events.
pub fn social_event_schema() -> Schema {
    let mut s = Schema::new();
    for c in ["Identity", "Contact", "Participation", "Event"] {
        s.add_class(c).expect("fixture class");
    }
    for def in [
        AssociationDef::new("Ownership", ("Identity", "owner"), ("Contact", "Contact")),
        AssociationDef::new(
            "Reference",
            ("Contact", "referrer"),
            ("Identity", "contactIdentity"),
        ),
        AssociationDef::new(
            "Attendance",
            ("Identity", "Identity"),
            ("Participation", "Participation"),
        ),
        AssociationDef::new(
            "Invitation",
            ("Event", "Event"),
            ("Participation", "Participation"),
        ),
    ] {
        s.add_association(def).expect("fixture association");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn oid(s: &str) -> ObjectId {
        ObjectId::from(s)
    }

    fn with_objects(objs: &[(&str, &str)]) -> SystemData {
        let mut d = SystemData::new();
        for (id, class) in objs {
            d.put_object(oid(id), (*class).into(), StateValue::new());
        }
        d
    }

    #[test]
    fn empty_data_validates() {
        assert!(validate_schema(&social_event_schema(), &SystemData::new()).is_ok());
    }

    #[test]
    fn link_between_wrong_classes_is_a_class_mismatch() {
        let mut d = with_objects(&[("E1", "Event"), ("P2", "Participation")]);
        d.links.insert(Link::new("E1", "Ownership", "P2"));
        let report = validate_schema(&social_event_schema(), &d);
        assert_eq!(report.violations.len(), 1);
        assert!(matches!(
            report.violations[0],
            Violation::LinkClassMismatch { .. }
        ));
        assert!(report.violations[0]
            .to_string()
            .starts_with("link class mismatch"));
    }

    #[test]
    fn unknown_class_is_reported() {
        let d = with_objects(&[("X1", "Ghost")]);
        let report = validate_schema(&social_event_schema(), &d);
        assert_eq!(
            report.violations,
            vec![Violation::UnknownClass {
                object: oid("X1"),
                class: "Ghost".into()
            }]
        );
        assert!(report.violations[0]
            .to_string()
            .starts_with("unknown class"));
    }

    #[test]
    fn dangling_links_and_orphan_states_are_reported() {
        let mut d = with_objects(&[("I1", "Identity")]);
        d.links.insert(Link::new("I1", "Ownership", "C9"));
        d.states.insert(oid("Z"), StateValue::new());
        let report = validate_schema(&social_event_schema(), &d);
        assert!(report.violations.contains(&Violation::DanglingLink {
            link: Link::new("I1", "Ownership", "C9"),
            missing: oid("C9")
        }));
        assert!(report
            .violations
            .contains(&Violation::OrphanState { object: oid("Z") }));
    }

    #[test]
    fn schema_rejects_bad_definitions() {
        let mut s = Schema::new();
        s.add_class("A").unwrap();
        assert_eq!(
            s.add_class("A"),
            Err(SchemaError::DuplicateClass("A".into()))
        );
        assert!(matches!(
            s.add_class("a.b"),
            Err(SchemaError::InvalidName(_))
        ));
        assert!(matches!(
            s.add_association(AssociationDef::new("x", ("A", "r"), ("B", "q"))),
            Err(SchemaError::UnknownClass { .. })
        ));
        assert_eq!(
            s.add_association(AssociationDef::new("self", ("A", "r"), ("A", "r"))),
            Err(SchemaError::AmbiguousRoles("self".into()))
        );
        s.add_association(AssociationDef::new("self", ("A", "parent"), ("A", "child")))
            .unwrap();
        assert!(matches!(
            s.add_association(AssociationDef::new("self", ("A", "x"), ("A", "y"))),
            Err(SchemaError::DuplicateAssociation(_))
        ));
    }

    #[test]
    fn subdata_basics() {
        let mut d = with_objects(&[("I1", "Identity"), ("C1", "Contact")]);
        d.links.insert(Link::new("I1", "Ownership", "C1"));
        assert!(is_subdata(&d, &d));
        assert!(is_subdata(&SystemData::new(), &d));

        let mut changed = d.clone();
        changed
            .states
            .insert(oid("I1"), StateValue::new().with("name", "x"));
        assert!(!is_subdata(&changed, &d));

        let mut dangling = with_objects(&[("I1", "Identity")]);
        dangling.links.insert(Link::new("I1", "Ownership", "C1"));
        assert!(!is_subdata(&dangling, &d));
    }

    #[test]
    fn remove_object_cascades_incident_links() {
        let mut d = with_objects(&[("I1", "Identity"), ("C1", "Contact"), ("I2", "Identity")]);
        d.links.insert(Link::new("I1", "Ownership", "C1"));
        d.links.insert(Link::new("C1", "Reference", "I2"));
        let removed = d.remove_object(&oid("C1"));
        assert_eq!(removed.len(), 2);
        assert!(d.links.is_empty());
        assert!(!d.states.contains_key(&oid("C1")));
    }

    fn arb_data() -> impl Strategy<Value = SystemData> {
        let ids = ["a", "b", "c", "d", "e"];
        (
            proptest::collection::btree_set(0usize..5, 0..=5),
            proptest::collection::vec((0usize..5, 0usize..5), 0..8),
            proptest::collection::vec((0usize..5, 0i64..3), 0..5),
        )
            .prop_map(move |(objs, links, states)| {
                let mut d = SystemData::new();
                for i in &objs {
                    d.put_object(oid(ids[*i]), "N".into(), StateValue::new());
                }
                for (i, v) in states {
                    if objs.contains(&i) {
                        d.states.insert(oid(ids[i]), StateValue::new().with("v", v));
                    }
                }
                for (a, b) in links {
                    if objs.contains(&a) && objs.contains(&b) {
                        d.links.insert(Link::new(ids[a], "E", ids[b]));
                    }
                }
                d
            })
    }

    proptest! {
        #[test]
        fn subdata_is_a_partial_order(a in arb_data(), b in arb_data(), c in arb_data()) {
            prop_assert!(is_subdata(&a, &a));
            if is_subdata(&a, &b) && is_subdata(&b, &a) {
                prop_assert_eq!(&a, &b);
            }
            if is_subdata(&a, &b) && is_subdata(&b, &c) {
                prop_assert!(is_subdata(&a, &c));
            }
        }

        #[test]
        fn restriction_is_subdata(d in arb_data(), keep in proptest::collection::btree_set(0usize..5, 0..=5)) {
            let ids = ["a", "b", "c", "d", "e"];
            let keep: BTreeSet<ObjectId> = keep.into_iter().map(|i| oid(ids[i])).collect();
            let r = d.restrict(&keep, d.links.clone());
            prop_assert!(is_subdata(&r, &d));
        }
    }
}
