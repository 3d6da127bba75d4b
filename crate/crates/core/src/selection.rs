//! Greedy forward predicate selection under a planning-based objective.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atoms::{AbstractState, GroundAtom, Pred};
use crate::labeling::{AbstractionStore, LabelError, Labeler};
use crate::learning::{learn_from_transitions, transitions_from, LearnConfig, LearnOutput, Transition};
use crate::operator::Operator;
use crate::planner::{ground_all, plan, AbstractPlan};
use crate::proposal::Pool;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveConfig {
    pub node_budget: usize,
    pub fail_penalty: f64,
    pub lambda_pred: f64,
    pub lambda_op: f64,
    /// Skeletons tried per demo before it counts as failed. Each retry drops
    /// the least-supported operator of the previous plan and costs a full
    /// node budget.
    #[serde(default = "default_max_skeletons")]
    pub max_skeletons: usize,
}

fn default_max_skeletons() -> usize {
    8
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            node_budget: 10_000,
            fail_penalty: 1e6,
            lambda_pred: 100.0,
            lambda_op: 1.0,
            max_skeletons: default_max_skeletons(),
        }
    }
}

/// Scores how badly an abstract plan for a demo's goal fails when its skill
/// sequence is actually executed: 0 is a clean success, 1 a total failure.
pub trait PlanChecker: Send + Sync {
    fn failure_fraction(&self, demo: usize, plan: &AbstractPlan) -> f64;
}

/// Trusts every abstract plan.
#[derive(Debug, Clone, Copy, Default)]
pub struct AcceptAll;

impl PlanChecker for AcceptAll {
    fn failure_fraction(&self, _demo: usize, _plan: &AbstractPlan) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub j: f64,
    /// Per-demo planning cost.
    pub costs: Vec<f64>,
    pub learned: LearnOutput,
    pub transitions: Vec<Transition>,
}

/// Learns operators over `predicates` (already labeled in `store`) and
/// scores them by replanning every demo's goal from its initial state.
pub fn evaluate(
    store: &AbstractionStore,
    predicates: &[Pred],
    initial: &BTreeSet<Pred>,
    learn: &LearnConfig,
    objective: &ObjectiveConfig,
    checker: &dyn PlanChecker,
) -> Evaluation {
    let abstracted = store.abstract_demos(predicates);
    let transitions = transitions_from(&store.demos, &abstracted);
    let learned = learn_from_transitions(&transitions, learn);
    let ops = learned.operators();
    let costs: Vec<f64> = store
        .demos
        .iter()
        .enumerate()
        .map(|(d, demo)| demo_cost(store, d, &abstracted[d][0], &demo.goal, &ops, objective, checker))
        .collect();
    let extra = predicates.iter().filter(|p| !initial.contains(*p)).count() as f64;
    let size: usize = ops.iter().map(|o| o.size()).sum();
    let j = costs.iter().sum::<f64>() + objective.lambda_pred * extra + objective.lambda_op * size as f64;
    Evaluation {
        j,
        costs,
        learned,
        transitions,
    }
}

fn demo_cost(
    store: &AbstractionStore,
    d: usize,
    init: &AbstractState,
    goal: &BTreeSet<GroundAtom>,
    ops: &[Operator],
    objective: &ObjectiveConfig,
    checker: &dyn PlanChecker,
) -> f64 {
    let objects = &store.demos[d].objects;
    let mut allowed: Vec<usize> = (0..ops.len()).collect();
    let mut nodes = 0.0;
    let mut first_u = None;
    for attempt in 0..objective.max_skeletons.max(1) {
        let subset: Vec<Operator> = allowed.iter().map(|&i| ops[i].clone()).collect();
        let ground = ground_all(&subset, objects, &store.types, Some(init));
        let Ok(p) = plan(init, goal, &ground, objective.node_budget) else {
            break;
        };
        nodes += p.stats.nodes_created as f64;
        let u = checker.failure_fraction(d, &p).clamp(0.0, 1.0);
        if u == 0.0 {
            return nodes + attempt as f64 * objective.node_budget as f64;
        }
        first_u.get_or_insert(u);
        // Blame the least-supported operator; later ones lose ties.
        let Some(&weakest) = p
            .steps
            .iter()
            .map(|g| g.op_index)
            .collect::<BTreeSet<_>>()
            .iter()
            .min_by_key(|&&i| (subset[i].support_count, std::cmp::Reverse(i)))
        else {
            break;
        };
        allowed.remove(weakest);
    }
    match first_u {
        Some(u) => nodes + objective.fail_penalty * u,
        None => objective.fail_penalty,
    }
}

pub fn objective_j(
    store: &AbstractionStore,
    predicates: &[Pred],
    initial: &BTreeSet<Pred>,
    learn: &LearnConfig,
    objective: &ObjectiveConfig,
    checker: &dyn PlanChecker,
) -> f64 {
    evaluate(store, predicates, initial, learn, objective, checker).j
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub objective: ObjectiveConfig,
    pub learn: LearnConfig,
    pub j_thresh: f64,
    /// Keep every provided predicate, selecting only among the others.
    pub retain_all_initial: bool,
    /// Drop the predicate added by the final, below-threshold iteration.
    pub rollback_final: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            objective: ObjectiveConfig::default(),
            learn: LearnConfig::default(),
            j_thresh: 2000.0,
            retain_all_initial: true,
            rollback_final: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub chosen: String,
    pub j_before: Option<f64>,
    pub j_after: f64,
    pub candidates: usize,
    pub accepted: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub iterations: Vec<IterationRecord>,
    pub selected: Vec<String>,
    pub final_j: f64,
}

impl SelectionTrace {
    /// J after every accepted iteration, in order.
    pub fn accepted_j(&self) -> Vec<f64> {
        self.iterations.iter().filter(|r| r.accepted).map(|r| r.j_after).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SelectionResult {
    pub selected: Vec<Pred>,
    pub evaluation: Evaluation,
    pub trace: SelectionTrace,
}

#[derive(Debug, thiserror::Error)]
pub enum SelectionError {
    #[error("the pool has no goal predicates")]
    EmptyPool,
    #[error(transparent)]
    Label(#[from] LabelError),
}

fn canonical_key(p: &Pred) -> (String, Vec<String>) {
    (p.name.clone(), p.arg_types.clone())
}

/// Adds the best candidate each iteration until the improvement no longer
/// exceeds `j_thresh`. The goal predicates are always part of the result.
pub fn hill_climb(
    pool: &Pool,
    store: &AbstractionStore,
    labeler: &dyn Labeler,
    checker: &dyn PlanChecker,
    cfg: &SelectionConfig,
) -> Result<SelectionResult, SelectionError> {
    if pool.goal.is_empty() {
        return Err(SelectionError::EmptyPool);
    }
    store.ensure(&pool.predicates, labeler)?;
    let mut selected: Vec<Pred> = pool
        .predicates
        .iter()
        .filter(|p| pool.goal.contains(*p) || (cfg.retain_all_initial && pool.initial.contains(*p)))
        .cloned()
        .collect();
    for g in &pool.goal {
        if !selected.contains(g) {
            selected.push(g.clone());
        }
    }
    let mut remaining: Vec<Pred> = pool
        .predicates
        .iter()
        .filter(|p| !selected.contains(p))
        .cloned()
        .collect();
    remaining.sort_by_key(canonical_key);

    let mut trace = SelectionTrace::default();
    let mut j_prev;
    let mut j_curr = f64::INFINITY;
    let mut stopped_by_threshold = false;
    while !remaining.is_empty() {
        let scores: Vec<f64> = remaining
            .par_iter()
            .map(|c| {
                let mut preds = selected.clone();
                preds.push(c.clone());
                objective_j(store, &preds, &pool.initial, &cfg.learn, &cfg.objective, checker)
            })
            .collect();
        // `remaining` is in canonical order, so the first minimum wins ties.
        let (best, &best_j) = scores
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
            .expect("non-empty");
        let chosen = remaining.remove(best);
        j_prev = j_curr;
        j_curr = best_j;
        let improved = j_prev == f64::INFINITY || j_prev - j_curr > cfg.j_thresh;
        trace.iterations.push(IterationRecord {
            iteration: trace.iterations.len() + 1,
            chosen: chosen.signature(),
            j_before: j_prev.is_finite().then_some(j_prev),
            j_after: j_curr,
            candidates: scores.len(),
            accepted: improved || !cfg.rollback_final,
        });
        selected.push(chosen);
        if !improved {
            stopped_by_threshold = true;
            break;
        }
    }
    if stopped_by_threshold && cfg.rollback_final {
        selected.pop();
    }
    let evaluation = evaluate(store, &selected, &pool.initial, &cfg.learn, &cfg.objective, checker);
    trace.selected = selected.iter().map(|p| p.signature()).collect();
    trace.final_j = evaluation.j;
    Ok(SelectionResult {
        selected,
        evaluation,
        trace,
    })
}
