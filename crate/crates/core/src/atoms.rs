//! Predicates, ground and lifted atoms, abstract states.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::{Arc, OnceLock};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Obj, ObjectState, TypeHierarchy, Variable};

/// Single-feature threshold test `value(f) <= threshold`, optionally negated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureClassifier {
    #[serde(rename = "type")]
    pub ty: String,
    pub feature: String,
    pub threshold: f64,
    pub negated: bool,
}

impl FeatureClassifier {
    pub fn evaluate(&self, objects: &ObjectState, obj: &Obj) -> Option<bool> {
        let v = objects.get(obj, &self.feature)?;
        Some((v <= self.threshold) != self.negated)
    }

    /// Canonical predicate name, e.g. `NOT-[[0:surface].z<=[idx_0]1.59]`.
    pub fn name(&self) -> String {
        let base = format!(
            "[[0:{}].{}<=[idx_0]{}]",
            self.ty,
            self.feature,
            format_threshold(self.threshold)
        );
        if self.negated {
            format!("NOT-{base}")
        } else {
            base
        }
    }

    pub fn parse_name(name: &str) -> Option<Self> {
        static RE: OnceLock<Regex> = OnceLock::new();
        let re = RE.get_or_init(|| {
            Regex::new(r"^(NOT-)?\[\[0:([^\]]+)\]\.([^<]+)<=\[idx_0\]([^\]]+)\]$").unwrap()
        });
        let c = re.captures(name)?;
        Some(Self {
            negated: c.get(1).is_some(),
            ty: c[2].to_owned(),
            feature: c[3].to_owned(),
            threshold: c[4].parse().ok()?,
        })
    }

    pub fn negation(&self) -> Self {
        Self {
            negated: !self.negated,
            ..self.clone()
        }
    }
}

/// Shortest round-trip decimal, always with a fractional part (`1.0`, `1.59`).
pub fn format_threshold(x: f64) -> String {
    let s = format!("{x}");
    if s.contains(['.', 'e', 'E', 'i', 'N']) {
        s
    } else {
        format!("{s}.0")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredicateKind {
    /// Evaluated by a labeler (a VLM or its simulator stand-in).
    Visual,
    /// Evaluated directly from the object-centric state.
    Feature { classifier: FeatureClassifier },
    /// Evaluated by a domain-registered routine behind a labeler.
    Provided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindTag {
    Visual,
    Feature,
    Provided,
}

impl PredicateKind {
    pub fn tag(&self) -> KindTag {
        match self {
            PredicateKind::Visual => KindTag::Visual,
            PredicateKind::Feature { .. } => KindTag::Feature,
            PredicateKind::Provided => KindTag::Provided,
        }
    }
}

/// A typed predicate. Identity is `(name, arg_types)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Predicate {
    pub name: String,
    pub arg_types: Vec<String>,
    #[serde(flatten)]
    pub kind: PredicateKind,
}

pub type Pred = Arc<Predicate>;

impl Predicate {
    pub fn new(name: impl Into<String>, arg_types: &[&str], kind: PredicateKind) -> Pred {
        Arc::new(Self {
            name: name.into(),
            arg_types: arg_types.iter().map(|s| s.to_string()).collect(),
            kind,
        })
    }

    pub fn visual(name: impl Into<String>, arg_types: &[&str]) -> Pred {
        Self::new(name, arg_types, PredicateKind::Visual)
    }

    pub fn provided(name: impl Into<String>, arg_types: &[&str]) -> Pred {
        Self::new(name, arg_types, PredicateKind::Provided)
    }

    pub fn feature(classifier: FeatureClassifier) -> Pred {
        Arc::new(Self {
            name: classifier.name(),
            arg_types: vec![classifier.ty.clone()],
            kind: PredicateKind::Feature { classifier },
        })
    }

    pub fn arity(&self) -> usize {
        self.arg_types.len()
    }

    pub fn classifier(&self) -> Option<&FeatureClassifier> {
        match &self.kind {
            PredicateKind::Feature { classifier } => Some(classifier),
            _ => None,
        }
    }

    /// `name(?a:t1, ?b:t2)` with one-letter variable names derived from types.
    pub fn signature(&self) -> String {
        if self.arg_types.is_empty() {
            return self.name.clone();
        }
        let vars = signature_variables(&self.arg_types);
        let args: Vec<String> = vars.iter().map(|v| v.to_string()).collect();
        format!("{}({})", self.name, args.join(", "))
    }

    fn key(&self) -> (&str, &[String]) {
        (&self.name, &self.arg_types)
    }
}

/// Variables used when displaying a predicate signature: first letter of the
/// type, numbered when two arguments share a letter.
pub fn signature_variables(types: &[String]) -> Vec<Variable> {
    let letters: Vec<char> = types
        .iter()
        .map(|t| t.chars().next().unwrap_or('o').to_ascii_lowercase())
        .collect();
    letters
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let clash = letters.iter().filter(|d| *d == c).count() > 1;
            let name = if clash {
                let idx = letters[..i].iter().filter(|d| *d == c).count() + 1;
                format!("?{c}{idx}")
            } else {
                format!("?{c}")
            };
            Variable::new(name, types[i].clone())
        })
        .collect()
}

impl PartialEq for Predicate {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl Eq for Predicate {}
impl PartialOrd for Predicate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Predicate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}
impl std::hash::Hash for Predicate {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.key().hash(state)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GroundError {
    #[error("{predicate} takes {expected} arguments, got {got}")]
    ArityMismatch {
        predicate: String,
        expected: usize,
        got: usize,
    },
    #[error("{predicate} argument {index}: {object} ({actual}) is not a {expected}")]
    TypeMismatch {
        predicate: String,
        index: usize,
        object: String,
        actual: String,
        expected: String,
    },
}

/// A predicate applied to objects. Ordered by predicate name, signature, then
/// argument names.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroundAtom {
    pub predicate: Pred,
    pub args: Vec<Obj>,
}

impl GroundAtom {
    /// Builds an atom without type checking.
    pub fn new_unchecked(predicate: Pred, args: Vec<Obj>) -> Self {
        Self { predicate, args }
    }
}

pub fn ground(
    predicate: &Pred,
    objects: &[Obj],
    types: &TypeHierarchy,
) -> Result<GroundAtom, GroundError> {
    if objects.len() != predicate.arity() {
        return Err(GroundError::ArityMismatch {
            predicate: predicate.name.clone(),
            expected: predicate.arity(),
            got: objects.len(),
        });
    }
    for (i, (o, t)) in objects.iter().zip(&predicate.arg_types).enumerate() {
        if !types.is_subtype(&o.ty, t) {
            return Err(GroundError::TypeMismatch {
                predicate: predicate.name.clone(),
                index: i,
                object: o.name.clone(),
                actual: o.ty.clone(),
                expected: t.clone(),
            });
        }
    }
    Ok(GroundAtom {
        predicate: predicate.clone(),
        args: objects.to_vec(),
    })
}

impl fmt::Display for GroundAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.predicate.name)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            f.write_str(&a.name)?;
        }
        f.write_str(")")
    }
}

/// A predicate applied to typed variables.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LiftedAtom {
    pub predicate: Pred,
    pub args: Vec<Variable>,
}

impl LiftedAtom {
    pub fn new(predicate: Pred, args: Vec<Variable>) -> Self {
        Self { predicate, args }
    }

    /// Grounds the atom through `binding`, which maps variable names to objects.
    pub fn ground_with(&self, binding: &dyn Fn(&Variable) -> Obj) -> GroundAtom {
        GroundAtom {
            predicate: self.predicate.clone(),
            args: self.args.iter().map(binding).collect(),
        }
    }
}

impl fmt::Display for LiftedAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.predicate.name)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

/// Set of true ground atoms, canonically ordered.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AbstractState {
    pub atoms: BTreeSet<GroundAtom>,
}

impl AbstractState {
    pub fn new(atoms: impl IntoIterator<Item = GroundAtom>) -> Self {
        Self {
            atoms: atoms.into_iter().collect(),
        }
    }

    pub fn contains(&self, atom: &GroundAtom) -> bool {
        self.atoms.contains(atom)
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &GroundAtom> {
        self.atoms.iter()
    }

    /// Atoms whose predicate is in `keep`.
    pub fn restrict(&self, keep: &BTreeSet<Pred>) -> Self {
        Self {
            atoms: self
                .atoms
                .iter()
                .filter(|a| keep.contains(&a.predicate))
                .cloned()
                .collect(),
        }
    }
}

impl fmt::Display for AbstractState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, a) in self.atoms.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str("}")
    }
}

/// `(s \ del) ∪ add`.
pub fn apply<'a>(
    s: &AbstractState,
    add: impl IntoIterator<Item = &'a GroundAtom>,
    del: impl IntoIterator<Item = &'a GroundAtom>,
) -> AbstractState {
    let mut atoms = s.atoms.clone();
    for d in del {
        atoms.remove(d);
    }
    for a in add {
        atoms.insert(a.clone());
    }
    AbstractState { atoms }
}

pub fn goal_holds<'a>(s: &AbstractState, goal: impl IntoIterator<Item = &'a GroundAtom>) -> bool {
    goal.into_iter().all(|g| s.atoms.contains(g))
}

/// Ternary label produced by labelers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    True,
    False,
    Unknown,
}

impl Label {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Label::True
        } else {
            Label::False
        }
    }

    /// Unknown is treated as false.
    pub fn holds(self) -> bool {
        self == Label::True
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::True => Label::False,
            Label::False => Label::True,
            Label::Unknown => Label::Unknown,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::True => "True",
            Label::False => "False",
            Label::Unknown => "Unknown",
        })
    }
}
