//! Grounding and greedy best-first search on the additive heuristic.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::atoms::{AbstractState, GroundAtom, LiftedAtom};
use crate::operator::{GroundOperator, Operator};
use crate::types::{Obj, TypeHierarchy, Variable};

/// Every injective, type-consistent grounding of `operators`. With `init`,
/// only groundings reachable under the delete relaxation are kept.
pub fn ground_all(
    operators: &[Operator],
    objects: &[Obj],
    types: &TypeHierarchy,
    init: Option<&AbstractState>,
) -> Vec<GroundOperator> {
    let candidates: Vec<Vec<Vec<&Obj>>> = operators
        .iter()
        .map(|op| {
            op.params
                .iter()
                .map(|v| objects.iter().filter(|o| types.is_subtype(&o.ty, &v.ty)).collect())
                .collect()
        })
        .collect();

    let Some(init) = init else {
        let mut out = Vec::new();
        for (i, op) in operators.iter().enumerate() {
            enumerate(op, &candidates[i], &|_| true, &mut |b| out.push(op.ground(i, b)));
        }
        return out;
    };

    let mut reached: HashSet<GroundAtom> = init.atoms.iter().cloned().collect();
    let mut seen: HashSet<(usize, Vec<Obj>)> = HashSet::new();
    let mut out = Vec::new();
    loop {
        let mut fresh = Vec::new();
        for (i, op) in operators.iter().enumerate() {
            let partial_ok = |partial: &HashMap<&str, &Obj>| {
                op.preconditions.iter().all(|a| match bind(a, partial) {
                    Some(g) => reached.contains(&g),
                    None => true,
                })
            };
            enumerate(op, &candidates[i], &partial_ok, &mut |b| {
                if !seen.contains(&(i, b.to_vec())) {
                    fresh.push((i, b.to_vec()));
                }
            });
        }
        if fresh.is_empty() {
            break;
        }
        for (i, b) in fresh {
            let g = operators[i].ground(i, &b);
            reached.extend(g.add_effects.iter().cloned());
            seen.insert((i, b));
            out.push(g);
        }
    }
    out.sort_by(|a, b| (a.op_index, &a.binding).cmp(&(b.op_index, &b.binding)));
    out
}

fn bind(atom: &LiftedAtom, partial: &HashMap<&str, &Obj>) -> Option<GroundAtom> {
    let args: Option<Vec<Obj>> = atom
        .args
        .iter()
        .map(|v| partial.get(v.name.as_str()).map(|o| (*o).clone()))
        .collect();
    Some(GroundAtom::new_unchecked(atom.predicate.clone(), args?))
}

fn enumerate(
    op: &Operator,
    candidates: &[Vec<&Obj>],
    partial_ok: &dyn Fn(&HashMap<&str, &Obj>) -> bool,
    emit: &mut dyn FnMut(&[Obj]),
) {
    fn rec<'a>(
        i: usize,
        params: &'a [Variable],
        candidates: &[Vec<&'a Obj>],
        partial: &mut HashMap<&'a str, &'a Obj>,
        chosen: &mut Vec<Obj>,
        partial_ok: &dyn Fn(&HashMap<&str, &Obj>) -> bool,
        emit: &mut dyn FnMut(&[Obj]),
    ) {
        if i == params.len() {
            emit(chosen);
            return;
        }
        for o in &candidates[i] {
            if chosen.contains(o) {
                continue;
            }
            partial.insert(params[i].name.as_str(), o);
            chosen.push((*o).clone());
            if partial_ok(partial) {
                rec(i + 1, params, candidates, partial, chosen, partial_ok, emit);
            }
            chosen.pop();
            partial.remove(params[i].name.as_str());
        }
    }
    let mut partial = HashMap::new();
    let mut chosen = Vec::new();
    rec(0, &op.params, candidates, &mut partial, &mut chosen, partial_ok, emit);
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub nodes_created: usize,
    pub nodes_expanded: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbstractPlan {
    pub steps: Vec<GroundOperator>,
    /// Expected abstract states, `steps.len() + 1` of them.
    pub states: Vec<AbstractState>,
    pub stats: SearchStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnreachableReason {
    /// The goal is unreachable even under the delete relaxation.
    RelaxedFixpoint,
    /// Search exhausted the reachable state space.
    ExhaustiveSearch,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanFailure {
    #[error("node budget exhausted after {} nodes", .stats.nodes_created)]
    BudgetExhausted { stats: SearchStats },
    #[error("goal proven unreachable ({reason:?})")]
    ProvenUnreachable {
        reason: UnreachableReason,
        stats: SearchStats,
    },
}

impl PlanFailure {
    pub fn stats(&self) -> SearchStats {
        match self {
            PlanFailure::BudgetExhausted { stats } | PlanFailure::ProvenUnreachable { stats, .. } => *stats,
        }
    }
}

type Bits = Vec<u64>;

fn has(bits: &Bits, i: usize) -> bool {
    bits[i / 64] >> (i % 64) & 1 == 1
}

fn set(bits: &mut Bits, i: usize, on: bool) {
    if on {
        bits[i / 64] |= 1 << (i % 64);
    } else {
        bits[i / 64] &= !(1 << (i % 64));
    }
}

struct Compiled {
    atoms: Vec<GroundAtom>,
    pre: Vec<Vec<usize>>,
    add: Vec<Vec<usize>>,
    del: Vec<Vec<usize>>,
    goal: Vec<usize>,
    /// For each atom, the operators that need it.
    consumers: Vec<Vec<usize>>,
    words: usize,
}

impl Compiled {
    fn new(init: &AbstractState, goal: &BTreeSet<GroundAtom>, ops: &[GroundOperator]) -> (Self, Bits) {
        let mut index: HashMap<GroundAtom, usize> = HashMap::new();
        let mut atoms = Vec::new();
        let mut intern = |a: &GroundAtom| -> usize {
            *index.entry(a.clone()).or_insert_with(|| {
                atoms.push(a.clone());
                atoms.len() - 1
            })
        };
        let init_ids: Vec<usize> = init.atoms.iter().map(&mut intern).collect();
        let goal_ids: Vec<usize> = goal.iter().map(&mut intern).collect();
        let mut pre = Vec::with_capacity(ops.len());
        let mut add = Vec::with_capacity(ops.len());
        let mut del = Vec::with_capacity(ops.len());
        for op in ops {
            let mut p: Vec<usize> = op.preconditions.iter().map(&mut intern).collect();
            p.sort_unstable();
            p.dedup();
            pre.push(p);
            add.push(op.add_effects.iter().map(&mut intern).collect());
            del.push(op.delete_effects.iter().map(&mut intern).collect());
        }
        let words = atoms.len().div_ceil(64).max(1);
        let mut consumers = vec![Vec::new(); atoms.len()];
        for (o, p) in pre.iter().enumerate() {
            for &a in p {
                consumers[a].push(o);
            }
        }
        let mut bits = vec![0u64; words];
        for i in init_ids {
            set(&mut bits, i, true);
        }
        (
            Compiled {
                atoms,
                pre,
                add,
                del,
                goal: goal_ids,
                consumers,
                words,
            },
            bits,
        )
    }

    fn applicable(&self, s: &Bits, o: usize) -> bool {
        self.pre[o].iter().all(|&a| has(s, a))
    }

    fn successor(&self, s: &Bits, o: usize) -> Bits {
        let mut n = s.clone();
        for &a in &self.del[o] {
            set(&mut n, a, false);
        }
        for &a in &self.add[o] {
            set(&mut n, a, true);
        }
        n
    }

    fn is_goal(&self, s: &Bits) -> bool {
        self.goal.iter().all(|&a| has(s, a))
    }

    /// Additive heuristic with unit action costs; `None` when some goal atom
    /// is relaxed-unreachable.
    fn h_add(&self, s: &Bits) -> Option<u64> {
        const INF: u64 = u64::MAX;
        let mut cost = vec![INF; self.atoms.len()];
        let mut heap = BinaryHeap::new();
        for (a, c) in cost.iter_mut().enumerate() {
            if has(s, a) {
                *c = 0;
                heap.push(Reverse((0u64, a)));
            }
        }
        let mut remaining: Vec<usize> = self.pre.iter().map(|p| p.len()).collect();
        let mut op_cost: Vec<u64> = vec![1; self.pre.len()];
        let relax = |o: usize, c: u64, cost: &mut Vec<u64>, heap: &mut BinaryHeap<Reverse<(u64, usize)>>| {
            for &a in &self.add[o] {
                if c < cost[a] {
                    cost[a] = c;
                    heap.push(Reverse((c, a)));
                }
            }
        };
        for o in 0..self.pre.len() {
            if remaining[o] == 0 {
                relax(o, 1, &mut cost, &mut heap);
            }
        }
        let mut done = vec![false; self.atoms.len()];
        while let Some(Reverse((c, a))) = heap.pop() {
            if done[a] || c > cost[a] {
                continue;
            }
            done[a] = true;
            for &o in &self.consumers[a] {
                remaining[o] -= 1;
                op_cost[o] = op_cost[o].saturating_add(c);
                if remaining[o] == 0 {
                    relax(o, op_cost[o], &mut cost, &mut heap);
                }
            }
        }
        let mut h = 0u64;
        for &g in &self.goal {
            if cost[g] == INF {
                return None;
            }
            h = h.saturating_add(cost[g]);
        }
        Some(h)
    }

    fn decode(&self, s: &Bits) -> AbstractState {
        AbstractState::new((0..self.atoms.len()).filter(|&a| has(s, a)).map(|a| self.atoms[a].clone()))
    }
}

/// Greedy best-first search. The goal is tested when a node is created;
/// `node_budget` bounds the number of created nodes (the root counts).
pub fn plan(
    init: &AbstractState,
    goal: &BTreeSet<GroundAtom>,
    ops: &[GroundOperator],
    node_budget: usize,
) -> Result<AbstractPlan, PlanFailure> {
    let (c, root) = Compiled::new(init, goal, ops);
    debug_assert_eq!(root.len(), c.words);
    let mut stats = SearchStats {
        nodes_created: 1,
        nodes_expanded: 0,
    };
    let mut nodes: Vec<(Bits, Option<(usize, usize)>)> = vec![(root.clone(), None)];

    let finish = |nodes: &[(Bits, Option<(usize, usize)>)], mut i: usize, stats: SearchStats| {
        let mut steps = Vec::new();
        let mut states = vec![c.decode(&nodes[i].0)];
        while let Some((parent, op)) = nodes[i].1 {
            steps.push(ops[op].clone());
            states.push(c.decode(&nodes[parent].0));
            i = parent;
        }
        steps.reverse();
        states.reverse();
        AbstractPlan { steps, states, stats }
    };

    if c.is_goal(&root) {
        return Ok(finish(&nodes, 0, stats));
    }
    let Some(h0) = c.h_add(&root) else {
        return Err(PlanFailure::ProvenUnreachable {
            reason: UnreachableReason::RelaxedFixpoint,
            stats,
        });
    };
    let mut visited: HashSet<Bits> = HashSet::new();
    visited.insert(root);
    let mut open = BinaryHeap::new();
    let mut counter = 0usize;
    open.push(Reverse((h0, counter, 0usize)));

    while let Some(Reverse((_, _, idx))) = open.pop() {
        stats.nodes_expanded += 1;
        for o in 0..ops.len() {
            if !c.applicable(&nodes[idx].0, o) {
                continue;
            }
            let next = c.successor(&nodes[idx].0, o);
            if visited.contains(&next) {
                continue;
            }
            if stats.nodes_created >= node_budget {
                return Err(PlanFailure::BudgetExhausted { stats });
            }
            stats.nodes_created += 1;
            visited.insert(next.clone());
            let goal = c.is_goal(&next);
            let h = if goal { Some(0) } else { c.h_add(&next) };
            nodes.push((next, Some((idx, o))));
            let id = nodes.len() - 1;
            if goal {
                return Ok(finish(&nodes, id, stats));
            }
            if let Some(h) = h {
                counter += 1;
                open.push(Reverse((h, counter, id)));
            }
        }
    }
    Err(PlanFailure::ProvenUnreachable {
        reason: UnreachableReason::ExhaustiveSearch,
        stats,
    })
}

/// Replays `steps` from `init`, checking preconditions and the final goal.
pub fn validate(steps: &[GroundOperator], init: &AbstractState, goal: &BTreeSet<GroundAtom>) -> bool {
    let mut s = init.clone();
    for op in steps {
        if !op.preconditions.iter().all(|a| s.contains(a)) {
            return false;
        }
        s = crate::atoms::apply(&s, &op.add_effects, &op.delete_effects);
    }
    crate::atoms::goal_holds(&s, goal)
}
