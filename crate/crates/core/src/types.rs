//! Objects, types, low-level states, skills and actions.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Name of the implicit root type.
pub const ROOT_TYPE: &str = "object";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectType {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
}

impl ObjectType {
    pub fn new(name: impl Into<String>, parent: Option<&str>) -> Self {
        Self {
            name: name.into(),
            parent: parent.map(str::to_owned),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TypeError {
    #[error("type `{0}` declared twice")]
    Duplicate(String),
    #[error("type `{0}` has an undeclared parent `{1}`")]
    UnknownParent(String, String),
    #[error("type hierarchy has a cycle through `{0}`")]
    Cycle(String),
}

/// Single-inheritance type forest. Types that were never declared behave as
/// direct children of the root.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ObjectType>", into = "Vec<ObjectType>")]
pub struct TypeHierarchy {
    parents: BTreeMap<String, Option<String>>,
}

impl TypeHierarchy {
    pub fn new(types: impl IntoIterator<Item = ObjectType>) -> Result<Self, TypeError> {
        let mut parents = BTreeMap::new();
        for t in types {
            if parents.insert(t.name.clone(), t.parent.clone()).is_some() {
                return Err(TypeError::Duplicate(t.name));
            }
        }
        for (name, parent) in &parents {
            if let Some(p) = parent {
                if p != ROOT_TYPE && !parents.contains_key(p) {
                    return Err(TypeError::UnknownParent(name.clone(), p.clone()));
                }
            }
        }
        for start in parents.keys() {
            let mut cur = start.as_str();
            let mut steps = 0;
            while let Some(Some(p)) = parents.get(cur) {
                steps += 1;
                if p == start || steps > parents.len() {
                    return Err(TypeError::Cycle(start.clone()));
                }
                cur = p;
            }
        }
        Ok(Self { parents })
    }

    pub fn types(&self) -> Vec<ObjectType> {
        self.parents
            .iter()
            .map(|(n, p)| ObjectType {
                name: n.clone(),
                parent: p.clone(),
            })
            .collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        name == ROOT_TYPE || self.parents.contains_key(name)
    }

    pub fn parent(&self, name: &str) -> Option<&str> {
        self.parents.get(name).and_then(|p| p.as_deref())
    }

    /// True when `child` equals `ancestor` or inherits from it.
    pub fn is_subtype(&self, child: &str, ancestor: &str) -> bool {
        if child == ancestor || ancestor == ROOT_TYPE {
            return true;
        }
        let mut cur = child;
        while let Some(p) = self.parent(cur) {
            if p == ancestor {
                return true;
            }
            cur = p;
        }
        false
    }
}

impl TryFrom<Vec<ObjectType>> for TypeHierarchy {
    type Error = TypeError;
    fn try_from(v: Vec<ObjectType>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<TypeHierarchy> for Vec<ObjectType> {
    fn from(h: TypeHierarchy) -> Self {
        h.types()
    }
}

/// A named object. Identity (equality, ordering, hashing) is the name.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectRef {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: String,
    #[serde(default)]
    pub descriptor: String,
}

pub type Obj = Arc<ObjectRef>;

impl ObjectRef {
    pub fn new(name: impl Into<String>, ty: impl Into<String>) -> Obj {
        let name = name.into();
        Arc::new(Self {
            descriptor: name.clone(),
            name,
            ty: ty.into(),
        })
    }

    pub fn with_descriptor(
        name: impl Into<String>,
        ty: impl Into<String>,
        descriptor: impl Into<String>,
    ) -> Obj {
        Arc::new(Self {
            name: name.into(),
            ty: ty.into(),
            descriptor: descriptor.into(),
        })
    }
}

impl PartialEq for ObjectRef {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}
impl Eq for ObjectRef {}
impl PartialOrd for ObjectRef {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for ObjectRef {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.name.cmp(&other.name)
    }
}
impl std::hash::Hash for ObjectRef {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.name.hash(state)
    }
}
impl fmt::Display for ObjectRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Named real-valued features per object.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObjectState {
    entries: BTreeMap<Obj, BTreeMap<String, f64>>,
}

impl ObjectState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, obj: Obj, features: BTreeMap<String, f64>) {
        self.entries.insert(obj, features);
    }

    pub fn set(&mut self, obj: &Obj, feature: &str, value: f64) {
        self.entries
            .entry(obj.clone())
            .or_default()
            .insert(feature.to_owned(), value);
    }

    pub fn get(&self, obj: &ObjectRef, feature: &str) -> Option<f64> {
        self.entries.get(obj)?.get(feature).copied()
    }

    pub fn features(&self, obj: &ObjectRef) -> Option<&BTreeMap<String, f64>> {
        self.entries.get(obj)
    }

    /// Feature values in sorted feature-name order.
    pub fn vector(&self, obj: &ObjectRef) -> Vec<f64> {
        self.entries
            .get(obj)
            .map(|f| f.values().copied().collect())
            .unwrap_or_default()
    }

    pub fn objects(&self) -> impl Iterator<Item = &Obj> {
        self.entries.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Obj, &BTreeMap<String, f64>)> {
        self.entries.iter()
    }

    pub fn find(&self, name: &str) -> Option<&Obj> {
        self.entries.keys().find(|o| o.name == name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A low-level state: image references plus the object-centric feature state.
///
/// `hidden` holds simulator-only attributes (for instance a patty's cooked
/// flag) that are visible in images but not exposed as object features. Only
/// ground-truth labelers read it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct State {
    pub images: Vec<String>,
    pub objects: ObjectState,
    pub timestep: usize,
    pub hidden: BTreeMap<String, f64>,
}

impl State {
    pub fn hidden_flag(&self, key: &str) -> bool {
        self.hidden.get(key).copied().unwrap_or(0.0) > 0.5
    }
}

/// Typed variable such as `?x0:patty`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: String,
}

impl Variable {
    pub fn new(name: impl Into<String>, ty: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ty: ty.into(),
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.name, self.ty)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Skill {
    pub name: String,
    pub params: Vec<Variable>,
    pub continuous_dim: usize,
}

impl Skill {
    pub fn new(name: impl Into<String>, params: Vec<Variable>, continuous_dim: usize) -> Arc<Self> {
        Arc::new(Self {
            name: name.into(),
            params,
            continuous_dim,
        })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ActionError {
    #[error("skill {skill} takes {expected} objects, got {got}")]
    Arity {
        skill: String,
        expected: usize,
        got: usize,
    },
    #[error("skill {skill} argument {index}: {object} is not a {expected}")]
    Type {
        skill: String,
        index: usize,
        object: String,
        expected: String,
    },
    #[error("skill {skill} takes {expected} continuous parameters, got {got}")]
    Theta {
        skill: String,
        expected: usize,
        got: usize,
    },
}

/// A skill invocation with bound objects and continuous parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub skill: Arc<Skill>,
    pub objects: Vec<Obj>,
    pub theta: Vec<f64>,
}

impl Action {
    pub fn new(
        skill: Arc<Skill>,
        objects: Vec<Obj>,
        theta: Vec<f64>,
        types: &TypeHierarchy,
    ) -> Result<Self, ActionError> {
        if objects.len() != skill.params.len() {
            return Err(ActionError::Arity {
                skill: skill.name.clone(),
                expected: skill.params.len(),
                got: objects.len(),
            });
        }
        for (i, (o, v)) in objects.iter().zip(&skill.params).enumerate() {
            if !types.is_subtype(&o.ty, &v.ty) {
                return Err(ActionError::Type {
                    skill: skill.name.clone(),
                    index: i,
                    object: o.name.clone(),
                    expected: v.ty.clone(),
                });
            }
        }
        if theta.len() != skill.continuous_dim {
            return Err(ActionError::Theta {
                skill: skill.name.clone(),
                expected: skill.continuous_dim,
                got: theta.len(),
            });
        }
        Ok(Self {
            skill,
            objects,
            theta,
        })
    }
}

/// Renders as `Pick[robot:robot, patty1:patty]`.
impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[", self.skill.name)?;
        for (i, o) in self.objects.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}:{}", o.name, o.ty)?;
        }
        f.write_str("]")
    }
}
