//! Random propositional planning problems and a breadth-first oracle.

use std::collections::{BTreeSet, HashSet, VecDeque};

use rand::seq::IndexedRandom;
use rand::Rng;
use symwm_core::atoms::{AbstractState, GroundAtom, LiftedAtom, Pred, Predicate};
use symwm_core::operator::{GroundOperator, Operator};
use symwm_core::types::Skill;

#[derive(Debug, Clone)]
pub struct PropModel {
    pub atoms: Vec<GroundAtom>,
    pub ops: Vec<GroundOperator>,
    pub init: AbstractState,
    pub goal: BTreeSet<GroundAtom>,
}

fn lift(p: &Pred) -> LiftedAtom {
    LiftedAtom::new(p.clone(), vec![])
}

/// At most `max_atoms` nullary atoms and `max_ops` operators over them.
pub fn random_model(rng: &mut impl Rng, max_atoms: usize, max_ops: usize) -> PropModel {
    let n_atoms = rng.random_range(1..=max_atoms);
    let preds: Vec<Pred> = (0..n_atoms).map(|i| Predicate::provided(format!("p{i}"), &[])).collect();
    let skill = Skill::new("Act", vec![], 0);
    let n_ops = rng.random_range(1..=max_ops);
    let ops = (0..n_ops)
        .map(|i| {
            let pick = |rng: &mut dyn rand::RngCore, p: f64| -> Vec<LiftedAtom> {
                preds.iter().filter(|_| rng.random_bool(p)).map(lift).collect()
            };
            let preconditions = pick(rng, 0.2);
            let add_effects = pick(rng, 0.2);
            let delete_effects: Vec<LiftedAtom> =
                pick(rng, 0.15).into_iter().filter(|d| !add_effects.contains(d)).collect();
            Operator {
                name: format!("op{i}"),
                params: vec![],
                preconditions,
                add_effects,
                delete_effects,
                ignore_effects: vec![],
                skill: skill.clone(),
                skill_args: vec![],
                support_count: 1,
            }
            .ground(i, &[])
        })
        .collect();
    let atoms: Vec<GroundAtom> = preds.iter().map(|p| GroundAtom::new_unchecked(p.clone(), vec![])).collect();
    let init = AbstractState::new(atoms.iter().filter(|_| rng.random_bool(0.3)).cloned());
    let k = rng.random_range(1..=3.min(n_atoms));
    let goal = atoms.choose_multiple(rng, k).cloned().collect();
    PropModel { atoms, ops, init, goal }
}

fn successor(s: &BTreeSet<GroundAtom>, op: &GroundOperator) -> Option<BTreeSet<GroundAtom>> {
    if !op.preconditions.iter().all(|p| s.contains(p)) {
        return None;
    }
    let mut next = s.clone();
    for d in &op.delete_effects {
        next.remove(d);
    }
    next.extend(op.add_effects.iter().cloned());
    Some(next)
}

/// Length of a shortest plan, or `None` if the goal is unreachable.
pub fn bfs(init: &AbstractState, goal: &BTreeSet<GroundAtom>, ops: &[GroundOperator]) -> Option<usize> {
    let start = init.atoms.clone();
    let mut seen: HashSet<BTreeSet<GroundAtom>> = HashSet::from([start.clone()]);
    let mut queue = VecDeque::from([(start, 0)]);
    while let Some((s, d)) = queue.pop_front() {
        if goal.is_subset(&s) {
            return Some(d);
        }
        for op in ops {
            if let Some(n) = successor(&s, op) {
                if seen.insert(n.clone()) {
                    queue.push_back((n, d + 1));
                }
            }
        }
    }
    None
}
