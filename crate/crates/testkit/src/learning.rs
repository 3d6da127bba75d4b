//! Random transition sets drawn from hidden lifted templates, and a naive
//! learner that clusters by brute-force permutation search and intersects
//! preconditions exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use symwm_core::atoms::{AbstractState, GroundAtom, Pred, Predicate};
use symwm_core::learning::{LearnOutput, Transition};
use symwm_core::types::{Action, Obj, ObjectRef, ObjectType, Skill, TypeHierarchy, Variable};

pub fn types() -> TypeHierarchy {
    TypeHierarchy::new([ObjectType::new("a", None), ObjectType::new("b", None)]).unwrap()
}

pub fn predicates() -> Vec<Pred> {
    vec![
        Predicate::provided("P", &["a"]),
        Predicate::provided("R", &["b"]),
        Predicate::provided("Q", &["a", "b"]),
        Predicate::provided("S", &["a", "a"]),
    ]
}

pub fn skills() -> Vec<Arc<Skill>> {
    vec![
        Skill::new("Move", vec![Variable::new("?x", "a")], 0),
        Skill::new("Use", vec![Variable::new("?x", "a"), Variable::new("?y", "b")], 0),
    ]
}

/// Effect template: slots 0.. are the skill arguments, the last slot may be
/// an extra object the controller does not name.
#[derive(Debug, Clone)]
struct Template {
    skill: Arc<Skill>,
    slots: Vec<String>,
    add: Vec<(Pred, Vec<usize>)>,
    del: Vec<(Pred, Vec<usize>)>,
}

fn random_atom_over(rng: &mut impl Rng, preds: &[Pred], slots: &[String]) -> Option<(Pred, Vec<usize>)> {
    for _ in 0..20 {
        let p = preds.choose(rng).unwrap();
        let mut args = Vec::new();
        for t in &p.arg_types {
            let fits: Vec<usize> = (0..slots.len()).filter(|&i| &slots[i] == t && !args.contains(&i)).collect();
            match fits.choose(rng) {
                Some(&i) => args.push(i),
                None => break,
            }
        }
        if args.len() == p.arity() {
            return Some((p.clone(), args));
        }
    }
    None
}

fn random_template(rng: &mut impl Rng) -> Template {
    let skill = skills().choose(rng).unwrap().clone();
    let mut slots: Vec<String> = skill.params.iter().map(|v| v.ty.clone()).collect();
    if rng.random_bool(0.4) {
        slots.push(if rng.random_bool(0.5) { "a" } else { "b" }.to_string());
    }
    let preds = predicates();
    let mut add = Vec::new();
    let mut del = Vec::new();
    for _ in 0..rng.random_range(1..=2) {
        add.extend(random_atom_over(rng, &preds, &slots));
    }
    for _ in 0..rng.random_range(0..=2) {
        del.extend(random_atom_over(rng, &preds, &slots));
    }
    del.retain(|d| !add.contains(d));
    Template { skill, slots, add, del }
}

fn all_ground_atoms(objects: &[Obj]) -> Vec<GroundAtom> {
    let mut out = Vec::new();
    for p in predicates() {
        let mut rec = vec![vec![]];
        for t in &p.arg_types {
            let mut next = Vec::new();
            for partial in &rec {
                for o in objects.iter().filter(|o| &o.ty == t) {
                    if !partial.contains(o) {
                        let mut v: Vec<Obj> = partial.clone();
                        v.push(o.clone());
                        next.push(v);
                    }
                }
            }
            rec = next;
        }
        out.extend(rec.into_iter().map(|args| GroundAtom::new_unchecked(p.clone(), args)));
    }
    out
}

/// A random set of transitions over at most `max_objects` objects.
pub fn random_transitions(rng: &mut impl Rng, max_objects: usize) -> Vec<Transition> {
    let n_obj = rng.random_range(2..=max_objects.max(2));
    let mut objects: Vec<Obj> = (0..n_obj)
        .map(|i| {
            let ty = if i == 0 {
                "a"
            } else if i == 1 {
                "b"
            } else if rng.random_bool(0.5) {
                "a"
            } else {
                "b"
            };
            ObjectRef::new(format!("o{i}"), ty)
        })
        .collect();
    objects.shuffle(rng);
    let atoms = all_ground_atoms(&objects);
    let templates: Vec<Template> = (0..rng.random_range(1..=3)).map(|_| random_template(rng)).collect();
    let types = types();
    let n = rng.random_range(4..=25);
    let mut out = Vec::new();
    for _ in 0..20 * n {
        if out.len() == n {
            break;
        }
        let t = templates.choose(rng).unwrap();
        let mut binding: Vec<Obj> = Vec::new();
        for ty in &t.slots {
            let choices: Vec<&Obj> = objects.iter().filter(|o| &o.ty == ty && !binding.contains(o)).collect();
            match choices.choose(rng) {
                Some(o) => binding.push((*o).clone()),
                None => break,
            }
        }
        if binding.len() != t.slots.len() {
            // Not enough objects of some type for this template.
            continue;
        }
        let state: BTreeSet<GroundAtom> = atoms.iter().filter(|_| rng.random_bool(0.4)).cloned().collect();
        let ground = |list: &[(Pred, Vec<usize>)]| -> Vec<GroundAtom> {
            list.iter()
                .map(|(p, ix)| GroundAtom::new_unchecked(p.clone(), ix.iter().map(|&i| binding[i].clone()).collect()))
                .collect()
        };
        let mut next = state.clone();
        for d in ground(&t.del) {
            next.remove(&d);
        }
        next.extend(ground(&t.add));
        if rng.random_bool(0.1) {
            // A spurious flip makes a new effect class.
            let extra = atoms.choose(rng).unwrap().clone();
            if !next.remove(&extra) {
                next.insert(extra);
            }
        }
        let k = t.skill.params.len();
        let action = Action::new(t.skill.clone(), binding[..k].to_vec(), vec![], &types).unwrap();
        let i = out.len();
        out.push(Transition {
            demo: i / 5,
            step: i % 5,
            state: AbstractState::new(state),
            action,
            next: AbstractState::new(next),
        });
    }
    out
}

/// Controller arguments plus every object named by an effect, sorted.
pub fn relevant_objects(t: &Transition) -> Vec<Obj> {
    let mut set: BTreeSet<Obj> = t.action.objects.iter().cloned().collect();
    for a in t.add_effects().iter().chain(t.delete_effects().iter()) {
        set.extend(a.args.iter().cloned());
    }
    set.into_iter().collect()
}

fn map_atoms(atoms: &BTreeSet<GroundAtom>, m: &BTreeMap<Obj, Obj>) -> BTreeSet<GroundAtom> {
    atoms
        .iter()
        .map(|a| GroundAtom::new_unchecked(a.predicate.clone(), a.args.iter().map(|o| m[o].clone()).collect()))
        .collect()
}

/// Calls `f` on every permutation of `0..n` in lexicographic order until it
/// returns true.
fn permutations(n: usize, f: &mut dyn FnMut(&[usize]) -> bool) -> bool {
    fn rec(cur: &mut Vec<usize>, used: &mut Vec<bool>, f: &mut dyn FnMut(&[usize]) -> bool) -> bool {
        if cur.len() == used.len() {
            return f(cur);
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                if rec(cur, used, f) {
                    return true;
                }
                cur.pop();
                used[i] = false;
            }
        }
        false
    }
    rec(&mut Vec::new(), &mut vec![false; n], f)
}

/// The lexicographically first bijection from `a`'s relevant objects onto
/// `b`'s that preserves types, maps controller arguments positionally and
/// maps both effect sets exactly.
pub fn naive_bijection(a: &Transition, b: &Transition) -> Option<BTreeMap<Obj, Obj>> {
    if a.action.skill.name != b.action.skill.name {
        return None;
    }
    let ra = relevant_objects(a);
    let rb = relevant_objects(b);
    if ra.len() != rb.len() {
        return None;
    }
    let (add_a, del_a) = (a.add_effects(), a.delete_effects());
    let (add_b, del_b) = (b.add_effects(), b.delete_effects());
    let mut found = None;
    permutations(ra.len(), &mut |perm| {
        let m: BTreeMap<Obj, Obj> = ra.iter().cloned().zip(perm.iter().map(|&j| rb[j].clone())).collect();
        let ok = m.iter().all(|(x, y)| x.ty == y.ty)
            && a.action.objects.iter().zip(&b.action.objects).all(|(x, y)| &m[x] == y)
            && map_atoms(&add_a, &m) == add_b
            && map_atoms(&del_a, &m) == del_b;
        if ok {
            found = Some(m);
        }
        ok
    });
    found
}

/// Operator learned by the naive oracle, grounded over its representative's
/// objects.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveClass {
    pub representative: usize,
    pub members: Vec<usize>,
    pub preconditions: BTreeSet<GroundAtom>,
    pub add: BTreeSet<GroundAtom>,
    pub del: BTreeSet<GroundAtom>,
}

/// Clusters transitions in (demo, step) order against each class's first
/// member, then intersects the members' pre-states pulled back onto the
/// representative's objects.
pub fn naive_learn(ts: &[Transition]) -> Vec<NaiveClass> {
    let mut order: Vec<usize> = (0..ts.len()).collect();
    order.sort_by_key(|&i| (ts[i].demo, ts[i].step));
    let mut classes: Vec<(NaiveClass, Vec<BTreeMap<Obj, Obj>>)> = Vec::new();
    for i in order {
        let hit = classes
            .iter_mut()
            .find_map(|(c, maps)| naive_bijection(&ts[c.representative], &ts[i]).map(|m| (c, maps, m)));
        match hit {
            Some((c, maps, m)) => {
                c.members.push(i);
                maps.push(m);
            }
            None => {
                let ident = relevant_objects(&ts[i]).into_iter().map(|o| (o.clone(), o)).collect();
                classes.push((
                    NaiveClass {
                        representative: i,
                        members: vec![i],
                        preconditions: BTreeSet::new(),
                        add: ts[i].add_effects(),
                        del: ts[i].delete_effects(),
                    },
                    vec![ident],
                ));
            }
        }
    }
    classes
        .into_iter()
        .map(|(mut c, maps)| {
            let mut pre: Option<BTreeSet<GroundAtom>> = None;
            for (&idx, m) in c.members.iter().zip(&maps) {
                let inverse: BTreeMap<Obj, Obj> = m.iter().map(|(k, v)| (v.clone(), k.clone())).collect();
                let pulled: BTreeSet<GroundAtom> = ts[idx]
                    .state
                    .iter()
                    .filter(|a| a.args.iter().all(|o| inverse.contains_key(o)))
                    .map(|a| {
                        GroundAtom::new_unchecked(a.predicate.clone(), a.args.iter().map(|o| inverse[o].clone()).collect())
                    })
                    .collect();
                pre = Some(match pre {
                    None => pulled,
                    Some(p) => p.intersection(&pulled).cloned().collect(),
                });
            }
            c.preconditions = pre.unwrap_or_default();
            c
        })
        .collect()
}

/// Checks the learner (exact intersection, no pruning) against the oracle:
/// same classes, same members, same grounded operators.
pub fn compare(ts: &[Transition], learned: &LearnOutput) -> Result<(), String> {
    let naive = naive_learn(ts);
    if !learned.pruned.is_empty() {
        return Err(format!("{} operators pruned", learned.pruned.len()));
    }
    if naive.len() != learned.classes.len() {
        return Err(format!("{} naive classes vs {} learned", naive.len(), learned.classes.len()));
    }
    for (n, l) in naive.iter().zip(&learned.classes) {
        let members: Vec<usize> = l.members.iter().map(|(i, _)| *i).collect();
        if members != n.members {
            return Err(format!("members {members:?} vs {:?}", n.members));
        }
        let (rep, sub) = &l.members[0];
        if *rep != n.representative {
            return Err(format!("representative {rep} vs {}", n.representative));
        }
        let op = l.operator.ground(0, sub);
        let set = |v: &[GroundAtom]| v.iter().cloned().collect::<BTreeSet<_>>();
        if set(&op.preconditions) != n.preconditions {
            return Err(format!("{}: preconditions differ", l.operator.name));
        }
        if set(&op.add_effects) != n.add || set(&op.delete_effects) != n.del {
            return Err(format!("{}: effects differ", l.operator.name));
        }
    }
    Ok(())
}
