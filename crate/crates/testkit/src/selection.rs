//! A small synthetic domain for exercising predicate selection: objects carry
//! binary features, skills set or clear one feature, and every predicate
//! reads one feature of its argument.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;
use symwm_core::atoms::{GroundAtom, KindTag, Label, Pred, Predicate};
use symwm_core::labeling::{LabelBatch, LabelContext, LabelError, Labeler};
use symwm_core::operator::Demonstration;
use symwm_core::proposal::Pool;
use symwm_core::types::{Action, Obj, ObjectRef, ObjectState, ObjectType, Skill, State, TypeHierarchy, Variable};

pub const FEATURES: usize = 5;

pub fn types() -> TypeHierarchy {
    TypeHierarchy::new([ObjectType::new("t", None)]).unwrap()
}

/// `F{k}` is provided; `G{k}` is a visual alias of the same feature.
pub fn predicate(k: usize, visual: bool) -> Pred {
    if visual {
        Predicate::visual(format!("G{k}"), &["t"])
    } else {
        Predicate::provided(format!("F{k}"), &["t"])
    }
}

fn feature_of(p: &Pred) -> Option<usize> {
    p.name.strip_prefix(['F', 'G'])?.parse().ok()
}

/// Reads the feature a predicate names.
#[derive(Debug, Clone, Copy, Default)]
pub struct FeatureReader;

impl Labeler for FeatureReader {
    fn identity(&self) -> String {
        "synthetic".into()
    }
    fn supports(&self, kind: KindTag) -> bool {
        kind != KindTag::Feature
    }
    fn label_batch(&self, state: &State, atoms: &[GroundAtom], _ctx: &LabelContext) -> Result<LabelBatch, LabelError> {
        let mut labels = BTreeMap::new();
        for a in atoms {
            let k = feature_of(&a.predicate).ok_or_else(|| LabelError::UnsupportedPredicateKind {
                labeler: self.identity(),
                predicate: a.predicate.name.clone(),
                kind: a.predicate.kind.tag(),
            })?;
            let v = state.objects.get(&a.args[0], &format!("f{k}")).unwrap_or(0.0);
            labels.insert(a.clone(), Label::from_bool(v > 0.5));
        }
        Ok(LabelBatch { labels, raw: None })
    }
}

fn skill(k: usize, on: bool) -> Arc<Skill> {
    let name = if on { format!("Set{k}") } else { format!("Unset{k}") };
    Skill::new(name, vec![Variable::new("?o", "t")], 0)
}

fn step(state: &State, k: usize, on: bool, obj: &Obj) -> State {
    let mut next = state.clone();
    next.objects.set(obj, &format!("f{k}"), if on { 1.0 } else { 0.0 });
    next.timestep += 1;
    next
}

fn random_demo(rng: &mut impl Rng, objects: &[Obj], types: &TypeHierarchy) -> Demonstration {
    let mut s = State::default();
    let mut os = ObjectState::new();
    for o in objects {
        let f = (0..FEATURES)
            .map(|k| (format!("f{k}"), if rng.random_bool(0.5) { 1.0 } else { 0.0 }))
            .collect();
        os.insert(o.clone(), f);
    }
    // The goal object starts without feature 0 so the demo is not trivial.
    let target = objects.choose(rng).unwrap().clone();
    os.set(&target, "f0", 0.0);
    s.objects = os;
    let mut states = vec![s];
    let mut actions = Vec::new();
    let n = rng.random_range(1..=4);
    for i in 0..=n {
        let (k, on, obj) = if i == n {
            (0, true, target.clone())
        } else {
            (rng.random_range(1..FEATURES), rng.random_bool(0.5), objects.choose(rng).unwrap().clone())
        };
        let next = step(states.last().unwrap(), k, on, &obj);
        actions.push(Action::new(skill(k, on), vec![obj], vec![], types).unwrap());
        states.push(next);
    }
    let goal = [GroundAtom::new_unchecked(predicate(0, false), vec![target])].into();
    Demonstration {
        objects: objects.to_vec(),
        states,
        actions,
        goal,
    }
}

pub struct SelectionCase {
    pub demos: Vec<Demonstration>,
    pub pool: Pool,
}

/// Two to four demos over two or three objects, and a pool with `F0` as the
/// goal predicate, a random subset of the other provided predicates as the
/// initial set, and the rest plus some visual aliases as candidates.
pub fn random_case(rng: &mut impl Rng) -> SelectionCase {
    let types = types();
    let objects: Vec<Obj> = (0..rng.random_range(2..=3)).map(|i| ObjectRef::new(format!("o{i}"), "t")).collect();
    let demos = (0..rng.random_range(2..=4)).map(|_| random_demo(rng, &objects, &types)).collect();
    let goal = predicate(0, false);
    let mut pool = Pool {
        predicates: vec![goal.clone()],
        initial: BTreeSet::from([goal.clone()]),
        goal: BTreeSet::from([goal]),
    };
    for k in 1..FEATURES {
        let p = predicate(k, false);
        if rng.random_bool(0.3) {
            pool.initial.insert(p.clone());
        }
        pool.predicates.push(p);
        if rng.random_bool(0.4) {
            pool.predicates.push(predicate(k, true));
        }
    }
    SelectionCase { demos, pool }
}
