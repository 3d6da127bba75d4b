//! Cluster-and-intersect operator learning with soft preconditions and
//! low-data pruning.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::atoms::{AbstractState, GroundAtom, LiftedAtom, Pred};
use crate::labeling::{label_demo, to_abstract, LabelError, Labeler};
use crate::operator::{Demonstration, Operator};
use crate::types::{Action, Obj, Skill, TypeHierarchy, Variable};

/// One abstract step `(s, a, s')` of a demonstration.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub demo: usize,
    pub step: usize,
    pub state: AbstractState,
    pub action: Action,
    pub next: AbstractState,
}

impl Transition {
    pub fn add_effects(&self) -> BTreeSet<GroundAtom> {
        self.next.atoms.difference(&self.state.atoms).cloned().collect()
    }

    pub fn delete_effects(&self) -> BTreeSet<GroundAtom> {
        self.state.atoms.difference(&self.next.atoms).cloned().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    pub h_pre_frac: f64,
    pub h_data_frac: f64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            h_pre_frac: 0.8,
            h_data_frac: 0.05,
        }
    }
}

/// Builds transitions from per-state abstractions (`abstracted[d][t]`).
pub fn transitions_from(
    demos: &[Demonstration],
    abstracted: &[Vec<AbstractState>],
) -> Vec<Transition> {
    let mut out = Vec::new();
    for (d, demo) in demos.iter().enumerate() {
        for (t, a) in demo.actions.iter().enumerate() {
            out.push(Transition {
                demo: d,
                step: t,
                state: abstracted[d][t].clone(),
                action: a.clone(),
                next: abstracted[d][t + 1].clone(),
            });
        }
    }
    out
}

pub fn abstract_demos(
    demos: &[Demonstration],
    predicates: &[Pred],
    types: &TypeHierarchy,
    labeler: &dyn Labeler,
) -> Result<Vec<Transition>, LabelError> {
    let abstracted: Vec<Vec<AbstractState>> = demos
        .iter()
        .map(|d| {
            label_demo(d, predicates, types, labeler)
                .map(|states| states.iter().map(to_abstract).collect())
        })
        .collect::<Result<_, _>>()?;
    Ok(transitions_from(demos, &abstracted))
}

/// Effects and relevant objects of a transition, with a hashable signature.
struct Effects {
    add: BTreeSet<GroundAtom>,
    del: BTreeSet<GroundAtom>,
    objects: BTreeSet<Obj>,
    signature: Signature,
}

type Signature = (String, Vec<String>, Vec<(Pred, Vec<String>)>, Vec<(Pred, Vec<String>)>, usize);

fn effects_of(t: &Transition) -> Effects {
    let add = t.add_effects();
    let del = t.delete_effects();
    let mut objects: BTreeSet<Obj> = t.action.objects.iter().cloned().collect();
    for a in add.iter().chain(&del) {
        objects.extend(a.args.iter().cloned());
    }
    let shape = |s: &BTreeSet<GroundAtom>| {
        let mut v: Vec<(Pred, Vec<String>)> = s
            .iter()
            .map(|a| (a.predicate.clone(), a.args.iter().map(|o| o.ty.clone()).collect()))
            .collect();
        v.sort();
        v
    };
    let signature = (
        t.action.skill.name.clone(),
        t.action.objects.iter().map(|o| o.ty.clone()).collect(),
        shape(&add),
        shape(&del),
        objects.len(),
    );
    Effects {
        add,
        del,
        objects,
        signature,
    }
}

/// Object bijection from `a`'s relevant objects onto `b`'s that maps the
/// controller arguments positionally and both effect sets exactly.
fn find_bijection(
    ta: &Transition,
    ea: &Effects,
    tb: &Transition,
    eb: &Effects,
) -> Option<BTreeMap<Obj, Obj>> {
    if ea.signature != eb.signature {
        return None;
    }
    let mut map: BTreeMap<Obj, Obj> = BTreeMap::new();
    let mut used: BTreeSet<Obj> = BTreeSet::new();
    for (x, y) in ta.action.objects.iter().zip(&tb.action.objects) {
        match map.get(x) {
            Some(prev) if prev != y => return None,
            Some(_) => {}
            None => {
                if x.ty != y.ty || !used.insert(y.clone()) {
                    return None;
                }
                map.insert(x.clone(), y.clone());
            }
        }
    }
    let free: Vec<Obj> = ea.objects.iter().filter(|o| !map.contains_key(*o)).cloned().collect();
    let targets: Vec<Obj> = eb.objects.iter().filter(|o| !used.contains(*o)).cloned().collect();
    if free.len() != targets.len() {
        return None;
    }

    fn consistent(
        map: &BTreeMap<Obj, Obj>,
        src: &BTreeSet<GroundAtom>,
        dst: &BTreeSet<GroundAtom>,
    ) -> bool {
        src.iter().all(|a| {
            let mapped: Option<Vec<Obj>> = a.args.iter().map(|o| map.get(o).cloned()).collect();
            match mapped {
                Some(args) => dst.contains(&GroundAtom::new_unchecked(a.predicate.clone(), args)),
                None => true,
            }
        })
    }

    fn search(
        i: usize,
        free: &[Obj],
        targets: &[Obj],
        taken: &mut Vec<bool>,
        map: &mut BTreeMap<Obj, Obj>,
        ea: &Effects,
        eb: &Effects,
    ) -> bool {
        if !consistent(map, &ea.add, &eb.add) || !consistent(map, &ea.del, &eb.del) {
            return false;
        }
        if i == free.len() {
            return true;
        }
        for (j, t) in targets.iter().enumerate() {
            if taken[j] || t.ty != free[i].ty {
                continue;
            }
            taken[j] = true;
            map.insert(free[i].clone(), t.clone());
            if search(i + 1, free, targets, taken, map, ea, eb) {
                return true;
            }
            map.remove(&free[i]);
            taken[j] = false;
        }
        false
    }

    let mut taken = vec![false; targets.len()];
    if search(0, &free, &targets, &mut taken, &mut map, ea, eb) {
        Some(map)
    } else {
        None
    }
}

/// Transitions grouped by effect/controller unification.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceClass {
    pub skill: String,
    /// Index of the representative (first member in (demo, step) order).
    pub representative: usize,
    /// Member transition indices with the bijection from the representative's
    /// relevant objects onto the member's.
    pub members: Vec<(usize, BTreeMap<Obj, Obj>)>,
}

pub fn partition(transitions: &[Transition]) -> Vec<EquivalenceClass> {
    let mut order: Vec<usize> = (0..transitions.len()).collect();
    order.sort_by_key(|&i| (transitions[i].demo, transitions[i].step));
    let effects: Vec<Effects> = transitions.iter().map(effects_of).collect();
    let mut classes: Vec<EquivalenceClass> = Vec::new();
    let mut buckets: HashMap<&Signature, Vec<usize>> = HashMap::new();
    for &i in &order {
        let bucket = buckets.entry(&effects[i].signature).or_default();
        let mut placed = false;
        for &c in bucket.iter() {
            let r = classes[c].representative;
            if let Some(m) = find_bijection(&transitions[r], &effects[r], &transitions[i], &effects[i]) {
                classes[c].members.push((i, m));
                placed = true;
                break;
            }
        }
        if !placed {
            let identity = effects[i].objects.iter().map(|o| (o.clone(), o.clone())).collect();
            bucket.push(classes.len());
            classes.push(EquivalenceClass {
                skill: transitions[i].action.skill.name.clone(),
                representative: i,
                members: vec![(i, identity)],
            });
        }
    }
    classes
}

/// Lifted effects plus one substitution (aligned with `params`) per member.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub params: Vec<Variable>,
    pub add_effects: Vec<LiftedAtom>,
    pub delete_effects: Vec<LiftedAtom>,
    pub skill: Arc<Skill>,
    pub skill_args: Vec<Variable>,
    pub substitutions: Vec<Vec<Obj>>,
}

/// Variables `?x0, ?x1, ...` over the representative's relevant objects in
/// name order.
pub fn induce_skeleton(class: &EquivalenceClass, transitions: &[Transition]) -> Skeleton {
    let rep = &transitions[class.representative];
    let eff = effects_of(rep);
    let objects: Vec<&Obj> = eff.objects.iter().collect();
    let params: Vec<Variable> = objects
        .iter()
        .enumerate()
        .map(|(i, o)| Variable::new(format!("?x{i}"), o.ty.clone()))
        .collect();
    let var_of: HashMap<&Obj, &Variable> = objects.iter().copied().zip(&params).collect();
    let lift = |s: &BTreeSet<GroundAtom>| -> Vec<LiftedAtom> {
        let mut v: Vec<LiftedAtom> = s
            .iter()
            .map(|a| LiftedAtom::new(a.predicate.clone(), a.args.iter().map(|o| var_of[o].clone()).collect()))
            .collect();
        v.sort();
        v
    };
    let substitutions = class
        .members
        .iter()
        .map(|(_, m)| objects.iter().map(|o| m[*o].clone()).collect())
        .collect();
    Skeleton {
        add_effects: lift(&eff.add),
        delete_effects: lift(&eff.del),
        skill: rep.action.skill.clone(),
        skill_args: rep.action.objects.iter().map(|o| var_of[o].clone()).collect(),
        params,
        substitutions,
    }
}

/// Lifted atoms holding in at least `h_pre_frac` of the members' pre-states.
pub fn learn_preconditions(
    skeleton: &Skeleton,
    class: &EquivalenceClass,
    transitions: &[Transition],
    h_pre_frac: f64,
) -> Vec<LiftedAtom> {
    let mut counts: BTreeMap<LiftedAtom, usize> = BTreeMap::new();
    for ((idx, _), sub) in class.members.iter().zip(&skeleton.substitutions) {
        let inverse: HashMap<&Obj, &Variable> = sub.iter().zip(&skeleton.params).collect();
        let mut lifted: BTreeSet<LiftedAtom> = BTreeSet::new();
        for a in transitions[*idx].state.iter() {
            let args: Option<Vec<Variable>> = a.args.iter().map(|o| inverse.get(o).map(|v| (*v).clone())).collect();
            if let Some(args) = args {
                lifted.insert(LiftedAtom::new(a.predicate.clone(), args));
            }
        }
        for l in lifted {
            *counts.entry(l).or_default() += 1;
        }
    }
    let n = class.members.len();
    counts
        .into_iter()
        .filter(|(_, c)| meets_fraction(*c, n, h_pre_frac))
        .map(|(a, _)| a)
        .collect()
}

/// `count / total >= frac`, inclusive at the boundary.
pub fn meets_fraction(count: usize, total: usize, frac: f64) -> bool {
    if total == 0 {
        return false;
    }
    count as f64 + 1e-9 >= frac * total as f64
}

/// Keeps operators whose support is at least `h_data_frac` of their skill's
/// transitions.
pub fn prune_low_data(
    operators: Vec<Operator>,
    skill_totals: &BTreeMap<String, usize>,
    h_data_frac: f64,
) -> Vec<Operator> {
    operators
        .into_iter()
        .filter(|op| {
            let total = skill_totals.get(&op.skill.name).copied().unwrap_or(0);
            meets_fraction(op.support_count, total, h_data_frac)
        })
        .collect()
}

/// Learned operator together with the transitions that support it.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedClass {
    pub operator: Operator,
    /// (transition index, substitution aligned with `operator.params`)
    pub members: Vec<(usize, Vec<Obj>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnOutput {
    pub classes: Vec<LearnedClass>,
    pub pruned: Vec<Operator>,
}

impl LearnOutput {
    pub fn operators(&self) -> Vec<Operator> {
        self.classes.iter().map(|c| c.operator.clone()).collect()
    }
}

pub fn learn_from_transitions(transitions: &[Transition], cfg: &LearnConfig) -> LearnOutput {
    let mut skill_totals: BTreeMap<String, usize> = BTreeMap::new();
    for t in transitions {
        *skill_totals.entry(t.action.skill.name.clone()).or_default() += 1;
    }
    let mut kept = Vec::new();
    let mut pruned = Vec::new();
    for (i, class) in partition(transitions).iter().enumerate() {
        let sk = induce_skeleton(class, transitions);
        let pre = learn_preconditions(&sk, class, transitions, cfg.h_pre_frac);
        let op = Operator {
            name: format!("STRIPS-Op{i}"),
            params: sk.params.clone(),
            preconditions: pre,
            add_effects: sk.add_effects.clone(),
            delete_effects: sk.delete_effects.clone(),
            ignore_effects: Vec::new(),
            skill: sk.skill.clone(),
            skill_args: sk.skill_args.clone(),
            support_count: class.members.len(),
        };
        let survives = !prune_low_data(vec![op.clone()], &skill_totals, cfg.h_data_frac).is_empty();
        if survives {
            kept.push(LearnedClass {
                operator: op,
                members: class
                    .members
                    .iter()
                    .map(|(t, _)| *t)
                    .zip(sk.substitutions)
                    .collect(),
            });
        } else {
            pruned.push(op);
        }
    }
    LearnOutput {
        classes: kept,
        pruned,
    }
}

pub fn learn_operators(
    demos: &[Demonstration],
    predicates: &[Pred],
    types: &TypeHierarchy,
    labeler: &dyn Labeler,
    cfg: &LearnConfig,
) -> Result<Vec<Operator>, LabelError> {
    let transitions = abstract_demos(demos, predicates, types, labeler)?;
    Ok(learn_from_transitions(&transitions, cfg).operators())
}

/// Assigns each transition to the first given operator that explains it
/// exactly: some binding agrees with the skill arguments, its preconditions
/// hold and its effects equal the observed ones. Operators nothing matches
/// get no members.
pub fn match_transitions(
    operators: &[Operator],
    transitions: &[Transition],
    demos: &[Demonstration],
    types: &TypeHierarchy,
) -> Vec<LearnedClass> {
    let mut classes: Vec<LearnedClass> = operators
        .iter()
        .map(|op| LearnedClass {
            operator: op.clone(),
            members: vec![],
        })
        .collect();
    for (i, tr) in transitions.iter().enumerate() {
        let adds = tr.add_effects();
        let dels = tr.delete_effects();
        let objects = &demos[tr.demo].objects;
        for class in classes.iter_mut() {
            let op = &class.operator;
            if op.skill.name != tr.action.skill.name || op.skill_args.len() != tr.action.objects.len() {
                continue;
            }
            let explains = |b: &[Obj]| {
                let g = op.ground(0, b);
                g.skill_objects == tr.action.objects
                    && g.preconditions.iter().all(|a| tr.state.contains(a))
                    && g.add_effects.iter().cloned().collect::<BTreeSet<_>>() == adds
                    && g.delete_effects.iter().cloned().collect::<BTreeSet<_>>() == dels
            };
            if let Some(b) = find_binding(op, objects, types, &mut Vec::new(), &explains) {
                class.members.push((i, b));
                break;
            }
        }
    }
    classes
}

fn find_binding(
    op: &Operator,
    objects: &[Obj],
    types: &TypeHierarchy,
    chosen: &mut Vec<Obj>,
    accept: &dyn Fn(&[Obj]) -> bool,
) -> Option<Vec<Obj>> {
    if chosen.len() == op.params.len() {
        return accept(chosen).then(|| chosen.clone());
    }
    let ty = &op.params[chosen.len()].ty;
    for o in objects {
        if chosen.contains(o) || !types.is_subtype(&o.ty, ty) {
            continue;
        }
        chosen.push(o.clone());
        if let Some(b) = find_binding(op, objects, types, chosen, accept) {
            return Some(b);
        }
        chosen.pop();
    }
    None
}
